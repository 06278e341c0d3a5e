#include <algorithm>
#include <cmath>
#include <memory>

#include "doctest.h"
#include "pcme/corona.hpp"
#include "pcme/error.hpp"
#include "pcme/regdist.hpp"
#include "pcme/whitney.hpp"

using namespace pcme;

namespace {

ParaGrid grid1(double t_lo, double t_hi, double delta) { return ParaGrid(base_box(1, t_lo, t_hi), delta); }
ParaGrid grid2(double t_lo, double t_hi, double x_lo, double x_hi, double delta) {
    return ParaGrid(base_box(2, t_lo, t_hi, x_lo, x_hi), delta);
}

}  // namespace

TEST_CASE("transition profile") {
    CHECK(transition_profile(-0.3).v == 1.0);
    CHECK(transition_profile(0.0).v == 1.0);
    CHECK(transition_profile(1.0).v == 0.0);
    CHECK(transition_profile(0.5).v == doctest::Approx(0.5));
    CHECK(transition_slope() == doctest::Approx(2.0).epsilon(1e-6));
    for (double s : {0.05, 0.2, 0.5, 0.77, 0.95}) {
        const double e = 1e-5;
        const auto p = transition_profile(s);
        CHECK(p.d1 == doctest::Approx((transition_profile(s + e).v - transition_profile(s - e).v) / (2 * e)).epsilon(1e-6));
        CHECK(p.d2 == doctest::Approx((transition_profile(s + e).d1 - transition_profile(s - e).d1) / (2 * e)).epsilon(1e-5));
        CHECK(transition_profile(1.0 - s).v == doctest::Approx(1.0 - p.v));
    }
}

TEST_CASE("whitney wrt constant h") {
    SUBCASE("n = 1") {
        const auto h = h_constant(grid1(0.0, 1.0, 1.0 / 64), 1.0);
        const auto w = whitney_wrt_h(h);
        // diam = s for a time-only base: s = 1/32 <= 1/20 < 2 s
        REQUIRE(!w.cubes.empty());
        for (const HCube& c : w.cubes) CHECK(c.side == 1.0 / 32);
        CHECK(w.cubes.size() == 1024);
        CHECK(w.unresolved.empty());
        CHECK(w.min_ratio == doctest::Approx(32.0));
        CHECK(w.max_neighbor_ratio == 1.0);
        CHECK(w.overlap <= w.overlap_bound);

        const HField H = build_H(w);
        const auto rep = verify_regdist_props(H);
        CHECK(rep.c1 >= 1.0 / 60);
        CHECK(rep.c2 <= rep.upper_bound);
        CHECK(rep.samples > 0);
        CHECK(rep.zero == 0);
        // periodic in t with the cube length
        const double period = 1.0 / 1024;
        for (double t : {0.45, 0.5001, 0.53}) {
            const ParaPoint p(t, {}), q(t + period, {});
            REQUIRE(H.interior(p));
            CHECK(H.eval(p) == doctest::Approx(H.eval(q)).epsilon(1e-9));
            CHECK(H.eval(p) >= 1.0 / 60);
            CHECK(H.eval(p) <= 0.6 * static_cast<double>(w.overlap));
        }
        CHECK(rep.lip <= rep.lip_bound);
    }
    SUBCASE("n = 2") {
        const auto h = h_constant(grid2(0.0, 0.125, 0.0, 0.5, 1.0 / 64), 1.0);
        const auto w = whitney_wrt_h(h);
        // diam = 2 s <= 1/20 gives s = 1/64
        for (const HCube& c : w.cubes) CHECK(c.side == 1.0 / 64);
        CHECK(w.cubes.size() == 512 * 32);
        const auto rep = verify_regdist_props(build_H(w));
        CHECK(rep.c1 >= 1.0 / 60);
        CHECK(rep.c2 <= rep.upper_bound);
    }
}

TEST_CASE("whitney wrt distance to a point") {
    SUBCASE("n = 1") {
        const ParaGrid g = grid1(-0.5, 0.5, 1.0 / 64);
        const auto h = h_distance_to(g, ParaPoint(0.0, {}));
        const auto w = whitney_wrt_h(h);
        CHECK(!w.unresolved.empty());
        CHECK(w.min_ratio >= 10.0);
        CHECK(w.max_ratio <= 60.0);
        for (const HCube& c : w.cubes) {
            // Z = {0} meets no 3I, exactly
            CHECK(h.box_inf(dilate_box(c.box, 3.0)) > 0.0);
            const double hc = h(c.box.center());
            CHECK(c.diam <= hc / 10.0);
            CHECK(c.diam >= hc / 60.0);
        }
        const auto rep = verify_regdist_props(build_H(w));
        CHECK(rep.c1 >= 1.0 / 60);
        CHECK(rep.c2 <= rep.upper_bound);
        CHECK(rep.deriv1 > 0.0);
        CHECK(std::isfinite(rep.deriv2));
    }
    SUBCASE("n = 2, point outside the domain") {
        const ParaGrid g = grid2(0.0, 0.125, 0.0, 0.5, 1.0 / 64);
        const auto h = h_distance_to(g, ParaPoint(0.0625, {-1.0}));
        const auto w = whitney_wrt_h(h);
        CHECK(w.min_neighbor_ratio >= 1.0 / 6);
        CHECK(w.max_neighbor_ratio == 2.0);
        CHECK(w.pairs > 0);
        const auto rep = verify_regdist_props(build_H(w));
        CHECK(rep.samples > 0);
        CHECK(rep.c1 >= 1.0 / 60);
        CHECK(rep.c2 <= rep.upper_bound);
        CHECK(rep.lip <= rep.lip_bound);
    }
}

TEST_CASE("H derivatives against finite differences") {
    const ParaGrid g = grid2(0.0, 0.125, 0.0, 0.5, 1.0 / 64);
    const HField H = build_H(whitney_wrt_h(h_distance_to(g, ParaPoint(0.0625, {-1.0}))));
    for (const ParaPoint& p : {ParaPoint(0.0623, {0.2871}), ParaPoint(0.031, {0.1502}), ParaPoint(0.0905, {0.3333})}) {
        const HDerivs d = H.derivs(p);
        auto at = [&](double dt, double dx) { return H.eval(ParaPoint(p.t + dt, {p.x[0] + dx})); };
        // second-order convergence of central differences
        double err_t[2], err_x[2], err_tt[2], err_xx[2];
        const double base_x = 2e-4, base_t = 4e-6;
        for (int k = 0; k < 2; ++k) {
            const double ex = base_x / (1 << k), et = base_t / (1 << k);
            err_t[k] = std::abs((at(et, 0) - at(-et, 0)) / (2 * et) - d.dt);
            err_x[k] = std::abs((at(0, ex) - at(0, -ex)) / (2 * ex) - d.dx);
            err_tt[k] = std::abs((at(et, 0) - 2 * d.value + at(-et, 0)) / (et * et) - d.dtt);
            err_xx[k] = std::abs((at(0, ex) - 2 * d.value + at(0, -ex)) / (ex * ex) - d.dxx);
        }
        CHECK(d.value == doctest::Approx(H.eval(p)));
        auto second_order = [](const double* e, double scale) {
            return e[1] <= 1e-9 * scale || e[1] <= 0.35 * e[0];
        };
        CHECK(second_order(err_t, std::abs(d.dt) + 1));
        CHECK(second_order(err_x, std::abs(d.dx) + 1));
        CHECK(second_order(err_tt, std::abs(d.dtt) + 1));
        CHECK(second_order(err_xx, std::abs(d.dxx) + 1));
        CHECK(err_t[0] <= 1e-3 * (std::abs(d.dt) + 1));
        CHECK(err_x[0] <= 1e-3 * (std::abs(d.dx) + 1));
    }
    const ParaGrid g1 = grid1(-0.5, 0.5, 1.0 / 64);
    const HField H1 = build_H(whitney_wrt_h(h_distance_to(g1, ParaPoint(0.0, {}))));
    CHECK_THROWS_AS(H1.derivs(ParaPoint(0.0, {})), ParameterError);
    CHECK_THROWS_AS(H1.derivs(ParaPoint(1e-9, {})), ResolutionError);
    CHECK(H1.eval(ParaPoint(0.0, {})) == 0.0);
}

TEST_CASE("derivative bounds are stable under refinement") {
    double d1[2], d2[2], lip[2];
    for (int k = 0; k < 2; ++k) {
        const ParaGrid g = grid1(-0.5, 0.5, 1.0 / (64 << k));
        const auto rep = verify_regdist_props(build_H(whitney_wrt_h(h_distance_to(g, ParaPoint(0.0, {})))));
        d1[k] = rep.deriv1;
        d2[k] = rep.deriv2;
        lip[k] = rep.lip;
    }
    CHECK(std::abs(d1[1] / d1[0] - 1.0) < 0.1);
    CHECK(std::abs(d2[1] / d2[0] - 1.0) < 0.1);
    CHECK(std::abs(lip[1] / lip[0] - 1.0) < 0.1);
}

TEST_CASE("whitney wrt h preconditions") {
    const ParaGrid g = grid1(0.0, 1.0, 1.0 / 32);
    const HSource negative{ScalarField::sample(g, [](const ParaPoint& p) { return p.t - 0.5; }),
                           [](const Box&) { return -1.0; }, "negative"};
    CHECK_THROWS_AS(whitney_wrt_h(negative), ParameterError);
    auto steep = h_distance_to(g, ParaPoint(0.0, {}));
    steep.field = ScalarField::sample(g, [](const ParaPoint& p) { return 2.0 * std::sqrt(std::abs(p.t)); });
    CHECK_THROWS_AS(whitney_wrt_h(steep), ParameterError);
    CHECK_THROWS_AS(whitney_wrt_h(h_constant(g, 100.0)), ResolutionError);
}

TEST_CASE("interpolated h has an exact box infimum") {
    const ParaGrid g = grid2(0.0, 0.25, 0.0, 0.5, 1.0 / 16);
    const auto h = h_interpolated(ScalarField::sample(g, [](const ParaPoint& p) {
        return 0.3 + 0.2 * std::sin(9.0 * p.t) * std::cos(7.0 * p.x[0]);
    }));
    for (const Box& b : {base_box(2, 0.01, 0.07, 0.1, 0.33), base_box(2, 0.0, 0.25, 0.0, 0.5),
                         base_box(2, 0.1, 0.1001, 0.2, 0.201)}) {
        double brute = 1e300;
        for (int i = 0; i <= 200; ++i)
            for (int j = 0; j <= 200; ++j) {
                const ParaPoint p(b.t_lo + (b.t_hi - b.t_lo) * i / 200.0, {b.lo[0] + (b.hi[0] - b.lo[0]) * j / 200.0});
                brute = std::min(brute, h.field.interpolate(p));
            }
        CHECK(h.box_inf(b) <= brute + 1e-15);
        CHECK(h.box_inf(b) == doctest::Approx(brute).epsilon(1e-4));
    }
}

TEST_CASE("regularized stopping distance") {
    GraphSpec s;
    s.n = 1;
    s.delta = 1.0 / 64;
    s.box = base_box(1, -2.0, 2.0);
    s.kind = "sine";
    s.amp_t = 0.03;
    s.k_t = 3.0;
    const auto g = make_graph(s);
    const auto tree =
        std::make_shared<const CubeTree>(build_cubes_on_graph(g, 1, 3, base_box(1, -0.25, 0.25)));
    const auto members = tree->descendants(tree->index_of({1, 0, 0}));
    const StoppingDistance d(tree, members);
    const auto h = h_half_stopping_distance(d, g, ParaGrid(base_box(1, -1.0, 1.0), 1.0 / 64));
    const auto w = whitney_wrt_h(h);
    CHECK(w.unresolved.empty());  // h >= floor / 2 > 0
    const auto rep = verify_regdist_props(build_H(w));
    CHECK(rep.zero == 0);
    CHECK(rep.c1 >= 1.0 / 60);
    CHECK(rep.c2 <= rep.upper_bound);
    const auto j = to_json(w);
    CHECK(j["cubes"].size() == w.cubes.size());
    CHECK(to_json(rep)["bounds_ok"] == true);
}
