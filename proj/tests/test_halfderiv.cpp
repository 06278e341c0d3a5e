#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "pcme/error.hpp"
#include "pcme/halfderiv.hpp"

using namespace pcme;

namespace {

constexpr double kPi = std::numbers::pi;

ScalarField time_series(double t_hi, double delta, ClosedForm f) {
    return ScalarField::sample(ParaGrid(base_box(1, 0.0, t_hi), delta), std::move(f));
}

double max_abs_diff(const ScalarField& a, const ScalarField& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.grid().size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// Independent dyadic mean oscillation: every block of 4^j time samples and
// 2^j spatial samples anchored at the origin of the grid.
double brute_pbmo(const ScalarField& g) {
    const ParaGrid& grid = g.grid();
    double best = 0.0;
    for (std::size_t ns = 2; ns * ns <= grid.nt() && (grid.dim() == 0 || ns <= grid.nx(0)); ns *= 2) {
        const std::size_t nts = ns * ns, sx = grid.dim() == 0 ? 1 : ns;
        for (std::size_t a = 0; a + nts <= grid.nt(); a += nts)
            for (std::size_t b = 0; b + sx <= grid.nx(0); b += sx) {
                std::vector<double> v;
                for (std::size_t i = a; i < a + nts; ++i)
                    for (std::size_t j = b; j < b + sx; ++j) v.push_back(g[grid.index(i, j)]);
                double mean = 0.0;
                for (double x : v) mean += x;
                mean /= static_cast<double>(v.size());
                double dev = 0.0;
                for (double x : v) dev += std::abs(x - mean);
                best = std::max(best, dev / static_cast<double>(v.size()));
            }
    }
    return best;
}

}  // namespace

TEST_CASE("half derivative of constants and cosines") {
    const double delta = 1.0 / 32;
    for (HalfMethod m : {HalfMethod::spectral, HalfMethod::pv}) {
        const auto d = half_time_derivative(time_series(1.0, delta, [](const ParaPoint&) { return 3.5; }), m);
        for (double v : d.values()) CHECK(std::abs(v) < 1e-9);
    }
    // cos(2 pi k t) is even about both ends of [0, 1], so the reflected
    // series is the cosine itself and the multiplier acts exactly.
    double amp[2] = {};
    for (int idx = 0; idx < 2; ++idx) {
        const double tau = 2.0 * kPi * (idx == 0 ? 2.0 : 8.0);
        const auto g = time_series(1.0, delta, [tau](const ParaPoint& p) { return std::cos(tau * p.t); });
        const auto d = half_time_derivative(g, HalfMethod::spectral);
        for (std::size_t i = 0; i < g.grid().size(); ++i) CHECK(d[i] == doctest::Approx(std::sqrt(tau) * g[i]).epsilon(1e-9).scale(1.0));
        double dg = 0.0, gg = 0.0;
        for (std::size_t i = 0; i < g.grid().size(); ++i) {
            dg += d[i] * g[i];
            gg += g[i] * g[i];
        }
        amp[idx] = dg / gg;
    }
    CHECK(amp[1] / amp[0] == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("half derivative acts per spatial column") {
    const ParaGrid grid(base_box(2, 0.0, 1.0, -0.5, 0.5), 1.0 / 16);
    const auto g = ScalarField::sample(grid, [](const ParaPoint& p) { return std::cos(2.0 * kPi * p.t) * p.x[0]; });
    const auto d = half_time_derivative(g, HalfMethod::spectral);
    for (std::size_t i = 0; i < grid.size(); ++i) CHECK(d[i] == doctest::Approx(std::sqrt(2.0 * kPi) * g[i]).scale(1.0));
}

TEST_CASE("half derivative is linear") {
    const double delta = 1.0 / 16;
    const auto f = time_series(1.0, delta, [](const ParaPoint& p) { return std::exp(-20.0 * (p.t - 0.3) * (p.t - 0.3)); });
    const auto g = time_series(1.0, delta, [](const ParaPoint& p) { return std::abs(p.t - 0.6); });
    const auto fg = time_series(1.0, delta, [](const ParaPoint& p) {
        return 2.0 * std::exp(-20.0 * (p.t - 0.3) * (p.t - 0.3)) - 3.0 * std::abs(p.t - 0.6);
    });
    for (HalfMethod m : {HalfMethod::spectral, HalfMethod::pv}) {
        const auto df = half_time_derivative(f, m), dg = half_time_derivative(g, m), dfg = half_time_derivative(fg, m);
        for (std::size_t i = 0; i < f.grid().size(); ++i) CHECK(dfg[i] == doctest::Approx(2.0 * df[i] - 3.0 * dg[i]).scale(1.0).epsilon(1e-10));
    }
}

TEST_CASE("pv quadrature agrees with the multiplier") {
    CHECK(c_hat() == doctest::Approx(-1.0 / (2.0 * std::sqrt(2.0 * kPi))));
    const double c256 = pv_calibration(256), c4096 = pv_calibration(4096);
    CHECK(std::abs(c256 - 1.0) < 1e-2);
    CHECK(std::abs(c4096 - 1.0) < std::abs(c256 - 1.0) / 4.0);

    // Smooth bump, even about both ends: discrepancy decays at least at
    // first order in the time step.
    auto bump = [](const ParaPoint& p) { return std::exp(std::cos(2.0 * kPi * p.t)); };
    double err[3];
    const double deltas[3] = {1.0 / 16, 1.0 / 32, 1.0 / 64};
    for (int k = 0; k < 3; ++k) {
        const auto g = time_series(1.0, deltas[k], bump);
        err[k] = max_abs_diff(half_time_derivative(g, HalfMethod::pv), half_time_derivative(g, HalfMethod::spectral));
        MESSAGE("dt = " << deltas[k] * deltas[k] << " max |pv - spectral| = " << err[k]);
    }
    CHECK(err[1] < err[0] / 3.5);
    CHECK(err[2] < err[1] / 3.5);
    CHECK(err[0] < 0.05);
}

TEST_CASE("dyadic parabolic BMO") {
    SUBCASE("constants, homogeneity and the brute-force oracle") {
        const ParaGrid grid(base_box(2, 0.0, 1.0, 0.0, 1.0), 1.0 / 16);
        const auto c = ScalarField::sample(grid, [](const ParaPoint&) { return -2.0; });
        CHECK(pbmo_norm(c) == 0.0);
        auto fn = [](const ParaPoint& p) { return std::sin(7.0 * p.t) + std::abs(p.x[0] - 0.37) + p.t * p.x[0]; };
        const auto g = ScalarField::sample(grid, fn);
        const auto g3 = ScalarField::sample(grid, [&](const ParaPoint& p) { return -3.0 * fn(p); });
        const PbmoReport r = pbmo_report(g);
        CHECK(r.value == doctest::Approx(brute_pbmo(g)).epsilon(1e-12));
        CHECK(pbmo_norm(g3) == doctest::Approx(3.0 * r.value).epsilon(1e-12));
        CHECK(r.generations == 4);  // sides 1/8 .. 1
        CHECK(r.worst_side >= 2.0 / 16);
    }
    SUBCASE("n = 1 oracle") {
        const auto g = time_series(1.0, 1.0 / 32, [](const ParaPoint& p) { return std::sqrt(std::abs(p.t - 0.41)); });
        CHECK(pbmo_norm(g) == doctest::Approx(brute_pbmo(g)).epsilon(1e-12));
    }
    SUBCASE("locality under window doubling") {
        const double l = 1.0 / 64;
        auto step = [l](const ParaPoint& p) { return std::tanh((p.t - 1.0 / 3.0) / (l * l)); };
        const auto small = time_series(1.0, 1.0 / 64, step);
        const auto large = time_series(2.0, 1.0 / 64, step);
        const double a = pbmo_norm(small), b = pbmo_norm(large);
        CHECK(a > 0.1);
        CHECK(std::abs(b - a) / a < 0.1);
        Box half = large.grid().box();
        half.t_hi = 1.0;
        CHECK(pbmo_norm(large, half) == doctest::Approx(a).epsilon(1e-12));
    }
    SUBCASE("window must lie in the grid") {
        const auto g = time_series(1.0, 1.0 / 16, [](const ParaPoint& p) { return p.t; });
        Box w = g.grid().box();
        w.t_hi = 2.0;
        CHECK_THROWS_AS(pbmo_norm(g, w), OutOfWindowError);
    }
}

TEST_CASE("gamma hat") {
    SUBCASE("n = 2: affine in x' and constant in t is flat") {
        const ParaGrid grid(base_box(2, 0.0, 1.0, 0.0, 1.0), 1.0 / 64);
        const auto h = ScalarField::sample(grid, [](const ParaPoint& p) { return 0.3 + 1.7 * p.x[0]; });
        CHECK(gamma_hat(h, ParaPoint(0.5, {0.5}), 0.25) < 1e-12);
    }
    SUBCASE("H = t against the continuous least-squares value") {
        // n = 1: B = {|s| < r^2}, best constant is the mean, gamma^2 = (2/3) r^2.
        // n = 2: by symmetry the best L is constant again and
        // gamma^2 = r^{-5} int_B s^2 = 4 r^2 / 21.
        const auto h1 = time_series(1.0, 1.0 / 256, [](const ParaPoint& p) { return p.t; });
        const auto g1 = gamma_hat(h1, ParaPoint(0.5, {}), 0.25);
        CHECK(g1 == doctest::Approx(0.25 * std::sqrt(2.0 / 3.0)).epsilon(2e-3));
        const ParaGrid grid(base_box(2, 0.0, 1.0, 0.0, 1.0), 1.0 / 128);
        const auto h2 = ScalarField::sample(grid, [](const ParaPoint& p) { return p.t; });
        const auto g2 = gamma_hat(h2, ParaPoint(0.5, {0.5}), 0.25);
        CHECK(g2 == doctest::Approx(0.25 * std::sqrt(4.0 / 21.0)).epsilon(2e-2));
        // Homogeneous of parabolic degree 2: gamma scales like r.
        CHECK(gamma_hat(h2, ParaPoint(0.5, {0.5}), 0.5) / g2 == doctest::Approx(2.0).epsilon(2e-2));
        // An affine family in (t, x') absorbs t.
        CHECK(gamma_hat(h2, ParaPoint(0.5, {0.5}), 0.25, AffineFamily::space_time) < 1e-9);
    }
    SUBCASE("enlarging the family never increases gamma") {
        const ParaGrid grid(base_box(2, 0.0, 1.0, 0.0, 1.0), 1.0 / 64);
        const auto h = ScalarField::sample(grid, [](const ParaPoint& p) { return std::sin(5.0 * p.t) * std::cos(3.0 * p.x[0]) + p.x[0] * p.x[0]; });
        for (double r : {0.05, 0.1, 0.2, 0.3}) {
            const ParaPoint c(0.45, {0.52});
            CHECK(gamma_hat(h, c, r, AffineFamily::space_time) <= gamma_hat(h, c, r) + 1e-15);
        }
    }
    SUBCASE("errors") {
        const auto h = time_series(1.0, 1.0 / 16, [](const ParaPoint& p) { return p.t; });
        CHECK_THROWS_AS(gamma_hat(h, ParaPoint(0.05, {}), 0.5), OutOfWindowError);
        CHECK_THROWS_AS(gamma_hat(h, ParaPoint(0.5, {}), 1.0 / 16), ResolutionError);
    }
}

TEST_CASE("carleson nu") {
    SUBCASE("H = 0") {
        const auto h = time_series(1.0, 1.0 / 128, [](const ParaPoint&) { return 0.0; });
        CHECK(carleson_nu(h, ParaPoint(0.5, {}), 0.25).nu == 0.0);
    }
    SUBCASE("H = t against the log-sum of the continuous gamma") {
        const double delta = 1.0 / 256, rho = 0.25;
        const auto h = time_series(1.0, delta, [](const ParaPoint& p) { return p.t; });
        const NuResult res = carleson_nu(h, ParaPoint(0.5, {}), rho);
        CHECK(res.levels == 8 * 5);  // rho / 2 delta = 32: five octaves
        double oracle = 0.0;
        for (int k = 0; k < res.levels; ++k) {
            const double r = rho * std::exp2(-(k + 0.5) / 8.0);
            oracle += (2.0 / 3.0) * r * r * base_ball_measure(0, rho) * std::numbers::ln2 / 8.0;
        }
        CHECK(res.nu == doctest::Approx(oracle).epsilon(0.02));
        CHECK(res.ratio == doctest::Approx(res.nu / (rho * rho)));
    }
    SUBCASE("translation invariance in x'") {
        const ParaGrid grid(base_box(2, 0.0, 1.0, 0.0, 1.5), 1.0 / 32);
        const auto h = ScalarField::sample(grid, [](const ParaPoint& p) { return std::sin(6.0 * p.t) + 0.2 * p.x[0]; });
        const double a = carleson_nu(h, ParaPoint(0.5, {0.5}), 0.25).ratio;
        const double b = carleson_nu(h, ParaPoint(0.5, {1.0}), 0.25).ratio;
        CHECK(a > 0.0);
        CHECK(a == doctest::Approx(b).epsilon(1e-9));
    }
    SUBCASE("too few levels") {
        const auto h = time_series(1.0, 1.0 / 16, [](const ParaPoint& p) { return p.t; });
        CHECK_THROWS_AS(carleson_nu(h, ParaPoint(0.5, {}), 0.14), ResolutionError);
    }
}
