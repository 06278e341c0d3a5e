#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "pcme/dyadic.hpp"
#include "pcme/error.hpp"

using namespace pcme;

namespace {

SampledGraph flat(int n, double delta, double t_lo, double t_hi, double x_lo = 0, double x_hi = 0) {
    GraphSpec s;
    s.n = n;
    s.delta = delta;
    s.box = base_box(n, t_lo, t_hi, x_lo, x_hi);
    return make_graph(s);
}

}  // namespace

TEST_CASE("cube id arithmetic") {
    CHECK(CubeId{3, 9, 5}.parent() == CubeId{2, 2, 2});
    CHECK(CubeId{3, -1, -1}.parent() == CubeId{2, -1, -1});
    CHECK(CubeId{1, -4, -2}.parent() == CubeId{0, -1, -1});
}

TEST_CASE("child counts and measures on flat graphs") {
    for (int n : {1, 2}) {
        const auto g = flat(n, 1.0 / 32, -1.0, 1.0, -1.0, 1.0);
        const auto tree = build_cubes_on_graph(g, 0, 3);
        const std::size_t expected = n == 1 ? 4 : 8;
        for (const Cube& c : tree.cubes()) {
            if (c.id.k < 3) {
                CHECK(c.children.size() == expected);
                double sum = 0.0;
                for (int ch : c.children) sum += tree.cube(ch).measure;
                CHECK(sum == doctest::Approx(c.measure).epsilon(1e-12));
            }
            const double ratio = c.diam / std::ldexp(1.0, -c.id.k);
            CHECK(ratio >= 1.0 - 1e-12);
            CHECK(ratio <= std::sqrt(double(n)) + 1.0);
            // flat cubes: sqrt((n-1) s^2) + s exactly
            CHECK(ratio == doctest::Approx(n == 1 ? 1.0 : 2.0));
        }
        for (int k = 0; k < 3; ++k)
            CHECK(tree.generation(k + 1).size() == expected * tree.generation(k).size());
    }
}

TEST_CASE("tree preconditions") {
    const auto g = flat(1, 1.0 / 32, -1.0, 1.0);
    CHECK_THROWS_AS(build_cubes_on_graph(g, 0, 4), ResolutionError);
    CHECK_THROWS_AS(build_cubes_on_graph(g, 0, 2, base_box(1, -0.3, 1.0)), ParameterError);
    CHECK_NOTHROW(build_cubes_on_graph(g, 1, 3, base_box(1, -0.25, 0.5)));
}

TEST_CASE("dilates against a brute-force oracle") {
    const auto g = flat(2, 1.0 / 32, -1.0, 1.0, -1.0, 1.0);
    const auto tree = build_cubes_on_graph(g, 1, 2);
    const int q = tree.index_of({2, 1, 1});
    const Cube& cube = tree.cube(q);

    const auto tight = dilate(tree, q, 1.0 + 1e-3);
    CHECK(tight.size() == cube.range.count());
    for (std::size_t s : tight) CHECK(tree.owner(2, s) == q);

    const auto twice = dilate(tree, q, 2.0);
    std::set<std::size_t> got(twice.begin(), twice.end());
    std::set<std::size_t> oracle;
    for (std::size_t s = 0; s < g.grid().size(); ++s) {
        double best = 1e300;
        for (std::size_t it = cube.range.t0; it < cube.range.t1; ++it)
            for (std::size_t ix = cube.range.x0; ix < cube.range.x1; ++ix)
                best = std::min(best, para_dist(g.sample_point(s), g.sample_point(g.grid().index(it, ix))));
        if (best < cube.diam) oracle.insert(s);
    }
    CHECK(got == oracle);
    CHECK_THROWS_AS(dilate(tree, q, 1.0), ParameterError);

    // sigma(KQ) <= C K^{n+1} sigma(Q). KQ sits in the ball of radius K diam(Q)
    // about the center, flat balls carry (4/3) r^3 and diam(Q) = 2 * 2^{-k}.
    double worst = 0.0;
    for (double k : {2.0, 3.0, 4.0}) {
        const double m = static_cast<double>(dilate(tree, q, k).size()) * g.grid().cell_volume();
        worst = std::max(worst, m / (std::pow(k, 3) * cube.measure));
    }
    CHECK(worst <= 4.0 / 3.0 * 8.0);
    CHECK(worst > 1.0);
}

TEST_CASE("cube axioms and boundary layers") {
    SUBCASE("n = 2 flat: layer exponent near 1") {
        const auto g = flat(2, 1.0 / 128, -0.375, 0.375, -0.75, 0.75);
        const auto tree = build_cubes_on_graph(g, 1, 3, base_box(2, -0.25, 0.25, -0.5, 0.5));
        const double rho[] = {0.1, 0.15, 0.2, 0.3};
        const auto rep = verify_cube_axioms(tree, rho);
        CHECK(rep.gamma == doctest::Approx(1.0).epsilon(0.2));
        CHECK(rep.min_measure_ratio == doctest::Approx(1.0));
        CHECK(rep.max_measure_ratio == doctest::Approx(1.0));
    }
    SUBCASE("n = 1 flat: only time faces, layer exponent near 2") {
        const auto g = flat(1, 1.0 / 128, -2.0, 2.0);
        const auto tree = build_cubes_on_graph(g, 0, 4, base_box(1, -1.0, 1.0));
        const double rho[] = {0.1, 0.15, 0.2, 0.3};
        const auto rep = verify_cube_axioms(tree, rho);
        CHECK(rep.gamma == doctest::Approx(2.0).epsilon(0.2));
        CHECK(rep.boundary_fraction[0] == doctest::Approx(2 * 0.01).epsilon(0.25));
    }
    SUBCASE("injected nesting fault is named") {
        const auto g = flat(1, 1.0 / 32, -1.0, 1.0);
        auto tree = build_cubes_on_graph(g, 0, 2);
        const int wrong = tree.generation(2).back();
        tree.inject_owner_fault(2, 0, wrong);
        CHECK_THROWS_AS(verify_cube_axioms(tree, {}), AssertionFailure);
        try {
            verify_cube_axioms(tree, {});
        } catch (const AssertionFailure& e) {
            CHECK(std::string(e.what()).find("nesting") != std::string::npos);
        }
    }
}

TEST_CASE("tree export") {
    const auto g = flat(1, 1.0 / 32, -1.0, 1.0);
    const auto tree = build_cubes_on_graph(g, 0, 2);
    const auto j = to_json(tree);
    CHECK(j["cubes"].size() == tree.size());
    CHECK(j["cubes"][0]["parent"].is_null());
    CHECK(j["cubes"].back()["parent"].is_array());
}
