#pragma once

// Regularized distance: Whitney decomposition of {h > 0} with respect to a
// nonnegative Lip(1/2,1) function h on the base R^n = (t, x'), and the
// smooth substitute H = sum diam(I_i) phi_i.

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcme/boxindex.hpp"
#include "pcme/pargeo.hpp"

namespace pcme {

class StoppingDistance;

/// A nonnegative function on a base grid with an exact lower bound of its
/// infimum over boxes.
struct HSource {
    ScalarField field;
    std::function<double(const Box&)> box_inf;
    std::string label;

    double operator()(const ParaPoint& p) const { return field.eval(p); }
};

HSource h_constant(const ParaGrid& grid, double c);
/// Parabolic distance to a base point.
HSource h_distance_to(const ParaGrid& grid, const ParaPoint& origin);
/// Multilinear interpolant of samples; its infimum over a box is attained
/// at a lattice point formed by the box faces and the sample lines.
HSource h_interpolated(ScalarField samples, std::string label = "interpolated");
/// (1/2) d(F(t, x')) sampled on `grid` and interpolated.
HSource h_half_stopping_distance(const StoppingDistance& d, const SampledGraph& graph, const ParaGrid& grid);

/// Dyadic base box: spatial side s, time side s^2.
struct HCube {
    Box box;
    double side = 0.0;
    double diam = 0.0;  // (sqrt(n - 1) + 1) s
};

struct WhitneyHOptions {
    double root_side = 0.0;  // 0: largest dyadic side tiling the domain
    double min_side = 0.0;   // 0: delta / 64
    bool check = true;       // assert 10 diam <= h <= 60 diam on 10I at samples and the neighbor ratio on pairs
};

struct WhitneyH {
    HSource h;
    std::vector<HCube> cubes;
    std::vector<Box> unresolved;  // boxes below min_side still failing the criterion
    double lip = 0.0;             // sampled Lip(1/2,1) constant of h
    std::size_t overlap = 0;      // N: max number of 10 I_i containing a sample
    double overlap_bound = 0.0;   // volume-comparison bound for N
    double min_ratio = 0.0;       // min over sampled 10I_i of h / diam(I_i)
    double max_ratio = 0.0;
    double min_neighbor_ratio = 0.0;  // over pairs with 10 I_i meeting 10 I_j
    double max_neighbor_ratio = 0.0;
    std::size_t pairs = 0;            // such pairs with different sides

    const Box& domain() const { return h.field.grid().box(); }
};

/// Maximal dyadic boxes with diam(I) <= (1/20) inf_I h. Throws
/// ParameterError when h is negative or its Lip(1/2,1) constant exceeds 1,
/// AssertionFailure when 10 diam <= h <= 60 diam on 10I or the neighbor ratio
/// bound fails.
WhitneyH whitney_wrt_h(const HSource& h, const WhitneyHOptions& opt = {});

struct HDerivs {
    double value = 0.0;
    double dt = 0.0, dtt = 0.0;
    double dx = 0.0, dxx = 0.0;  // along x' (n = 2 only)
};

/// Smooth transition profile: 1 for s <= 0, 0 for s >= 1, C^infinity.
/// Returns value, first and second derivative in s.
struct ProfileValue {
    double v = 0.0, d1 = 0.0, d2 = 0.0;
};
ProfileValue transition_profile(double s);
/// sup |d/ds transition_profile|.
double transition_slope();

class HField {
public:
    explicit HField(WhitneyH w);

    const WhitneyH& whitney() const { return *w_; }
    int base_dim() const { return w_->domain().dim; }
    double eval(const ParaPoint& p) const;
    /// Analytic derivatives of the bump sum. Throws ParameterError on Z and
    /// ResolutionError inside an unresolved box.
    HDerivs derivs(const ParaPoint& p) const;
    /// Indices of the cubes whose 3-dilate contains p; returns their count.
    std::size_t active(const ParaPoint& p, std::vector<std::size_t>& out) const;
    /// True when every cube that could carry p in its 3-dilate lies in the domain.
    bool interior(const ParaPoint& p) const;
    /// Lip(1/2,1) constant c' of phi_i times diam(I_i).
    double bump_lip() const;
    /// H sampled on the grid of h.
    ScalarField sample() const;

private:
    HDerivs sum(const ParaPoint& p, bool derivatives) const;

    std::shared_ptr<const WhitneyH> w_;
    BoxIndex support_;    // 3 I_i
    BoxIndex cells_;      // I_i
    BoxIndex unresolved_;
};

HField build_H(WhitneyH w);
HDerivs eval_H_derivs(const HField& field, const ParaPoint& p);

struct RegdistReport {
    double c1 = 0.0;            // min H / h
    double c2 = 0.0;            // max H / h
    double upper_bound = 0.0;   // (3/5) N
    double deriv1 = 0.0;        // sup h |dt H| + |grad H|
    double deriv2 = 0.0;        // sup h^3 |dt^2 H| + h |grad^2 H|
    double lip = 0.0;           // sampled Lip(1/2,1) constant of H
    double lip_bound = 0.0;     // 2 c' N
    double pbmo = -1.0;         // || D_t^{1/2} H ||_{P-BMO}, filled by the caller when measured
    std::size_t samples = 0;    // interior grid samples off Z
    std::size_t swept = 0;      // sweep points inside interior cubes
    std::size_t zero = 0;       // samples in Z
    std::size_t excluded = 0;   // samples near the domain edge or unresolved
    bool bounds_ok = false;
};

/// Measures the constants of the regularized distance over the interior
/// grid samples and a sweep of `sweep` points per axis inside every
/// interior cube. Only the two-sided comparability is a hard assertion.
RegdistReport verify_regdist_props(const HField& field, int sweep = 4);

nlohmann::json to_json(const RegdistReport& r);
nlohmann::json to_json(const WhitneyH& w);

}  // namespace pcme
