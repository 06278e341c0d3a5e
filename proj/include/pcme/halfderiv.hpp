#pragma once

// Half-order time derivative D_t^{1/2}, dyadic parabolic BMO and the
// gamma-hat flatness numbers with their Carleson functional nu.

#include <cstddef>

#include "json.hpp"
#include "pcme/pargeo.hpp"

namespace pcme {

enum class HalfMethod { pv, spectral };

/// The kernel constant: D_t^{1/2} g(t) = c_hat p.v. int (g(s) - g(t)) / |s - t|^{3/2} ds
/// has multiplier exactly |tau|^{1/2}.
double c_hat();

/// D_t^{1/2} along the time axis of every spatial column. The series is
/// extended past the window by even reflection about both ends (period
/// 2 T). spectral: multiplier |tau|^{1/2} on the reflected series. pv:
/// kernel sum over the reflected series with the singular cell handled by
/// symmetric cancellation and the far tail summed in closed form.
ScalarField half_time_derivative(const ScalarField& g, HalfMethod method);

/// spectral / pv amplitude ratio on a reference cosine sampled with `nt`
/// time steps per period; tends to 1 as nt grows.
double pv_calibration(std::size_t nt = 256);

struct PbmoReport {
    double value = 0.0;  // max mean oscillation
    Box worst;           // cube attaining it
    double worst_side = 0.0;
    std::size_t cubes = 0;
    int generations = 0;
};

/// max over dyadic cubes Q of `window` (spatial side s >= min_side, time side
/// s^2; anchored at the window's lower corner) of the mean of |g - g_Q| over
/// the samples of Q. A window with dim < 0 means the whole grid box;
/// min_side 0 means 2 delta.
PbmoReport pbmo_report(const ScalarField& g, Box window = Box{0, 0, {}, {}, -1}, double min_side = 0.0);
double pbmo_norm(const ScalarField& g, Box window = Box{0, 0, {}, {}, -1}, double min_side = 0.0);

enum class AffineFamily { space, space_time };

/// [r^{-d} int_B ((H - L) / r)^2 dsigma]^{1/2} minimized over L affine in x'
/// (or in (t, x')), d = dim + 2, B the parabolic ball of the base. Uses the
/// samples of the grid inside B with projected measure. Throws
/// OutOfWindowError when B leaves the grid box and ResolutionError when
/// r < 2 delta.
double gamma_hat(const ScalarField& H, const ParaPoint& center, double r,
                 AffineFamily family = AffineFamily::space);

struct NuResult {
    double nu = 0.0;
    double ratio = 0.0;  // nu / rho^{d}
    int levels = 0;
    double r_min = 0.0;
};

/// nu(center, rho) = int_0^rho int_{B(center, rho)} gamma_hat^2 dsigma dr / r,
/// truncated below at 2 delta, with 8 log-spaced r levels per octave. The
/// inner integral averages over a lattice of spacing min(r / 4, rho / 8)
/// times the exact ball measure. Throws ResolutionError with fewer than 3
/// levels.
NuResult carleson_nu(const ScalarField& H, const ParaPoint& center, double rho);

/// Measure of the parabolic ball of radius r in the base of dimension dim + 1.
double base_ball_measure(int dim, double r);

nlohmann::json to_json(const PbmoReport& r);
nlohmann::json to_json(const NuResult& r);

}  // namespace pcme
