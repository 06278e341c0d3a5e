#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "pcme/error.hpp"
#include "pcme/whitney.hpp"

using namespace pcme;

namespace {

SampledGraph flat1(double delta = 1.0 / 64) {
    GraphSpec s;
    s.n = 1;
    s.delta = delta;
    s.box = base_box(1, -2.0, 2.0);
    return make_graph(s);
}

Box domain1(double t_lo, double t_hi, double x_lo, double x_hi) {
    Box b;
    b.dim = 1;
    b.t_lo = t_lo;
    b.t_hi = t_hi;
    b.lo[0] = x_lo;
    b.hi[0] = x_hi;
    return b;
}

}  // namespace

TEST_CASE("parabolic dilation of boxes") {
    const Box b = dilate_box(domain1(0.0, 0.25, 0.0, 0.5), 4.0);
    CHECK(b.t_lo == doctest::Approx(0.125 - 2.0));
    CHECK(b.t_hi == doctest::Approx(0.125 + 2.0));
    CHECK(b.lo[0] == doctest::Approx(-0.75));
    CHECK(b.hi[0] == doctest::Approx(1.25));
}

TEST_CASE("whitney decomposition of a flat complement") {
    const auto g = flat1();
    const Box dom = domain1(-0.25, 0.25, -1.0, 1.0);
    const auto w = whitney_decompose(g, dom, {0.5, 6});
    REQUIRE(!w.cubes.empty());
    for (const auto& c : w.cubes) {
        // distance to the line x = 0 is the spatial gap, up to the time sampling
        const double gap = c.box.lo[0] > 0 ? c.box.lo[0] : -c.box.hi[0];
        CHECK(c.dist_E >= gap - 1e-12);
        CHECK(c.dist_E <= gap + g.sampling_radius());
        CHECK(c.dist_E / c.diam >= 4.0);
        CHECK(c.dist_E / c.diam <= 100.0);
        const Box d4 = dilate_box(c.box, 4.0);
        const double gap4 = d4.lo[0] > 0 ? d4.lo[0] : (d4.hi[0] < 0 ? -d4.hi[0] : 0.0);
        CHECK(4.0 * c.diam <= gap4 + 1e-12);
    }
    const double total = w.accepted_volume + w.discarded_volume + w.far_volume;
    CHECK(total == doctest::Approx(dom.volume()).epsilon(1e-12));
    double sum = 0.0;
    for (const auto& c : w.cubes) sum += c.box.volume();
    CHECK(sum == doctest::Approx(w.accepted_volume).epsilon(1e-12));
    CHECK(w.far == 0);

    // the discarded layer thins as the depth grows
    const auto deeper = whitney_decompose(g, dom, {0.5, 7});
    CHECK(deeper.discarded_volume == doctest::Approx(0.5 * w.discarded_volume).epsilon(0.05));
}

TEST_CASE("whitney cube above a point at height one") {
    const auto g = flat1();
    const auto w = whitney_decompose(g, domain1(-0.25, 0.25, -2.0, 2.0), {0.5, 6});
    const auto i = w.locate(ParaPoint(0.01, {1.0}));
    REQUIRE(i.has_value());
    const double diam = w.cubes[*i].diam;
    CHECK(diam >= 0.01);
    CHECK(diam <= 0.25);
    // run of the algorithm: side 1/16 at distance 1 (the first side with 4 diam <= dist(4I, E))
    CHECK(diam == doctest::Approx(2.0 / 16));
}

TEST_CASE("whitney decomposition preconditions") {
    const auto g = flat1();
    CHECK_THROWS_AS(whitney_decompose(g, domain1(-0.25, 0.25, -1.0, 0.9), {0.5, 4}), ParameterError);
    CHECK_THROWS_AS(whitney_decompose(g, domain1(-0.25, 0.25, -0.5, 0.5), {0.5, 0}), ResolutionError);
}

TEST_CASE("whitney regions") {
    const auto g = flat1();
    const auto tree = build_cubes_on_graph(g, 1, 3, base_box(1, -0.25, 0.25));
    const auto w = whitney_decompose(g, domain1(-0.5, 0.5, -1.5, 1.5), {0.5, 7, 1.0 / 16});
    const double eta = 1.0 / 16, K = 16.0;

    CHECK_THROWS_AS(whitney_region(tree, 0, eta, 8.0, false, w), ParameterError);

    const int q = tree.index_of({1, -1, 0});
    const auto r = whitney_region(tree, q, eta, K, false, w);
    const auto rs = whitney_region(tree, q, eta, K, true, w);
    REQUIRE(!r.members.empty());
    std::size_t too_close = 0, not_in_star = 0;
    for (std::size_t m : r.members) {
        if (w.cubes[m].dist_E < 0.5 * tree.cube(q).diam) ++too_close;
        if (!std::binary_search(rs.members.begin(), rs.members.end(), m)) ++not_in_star;
    }
    CHECK(too_close == 0);
    CHECK(not_in_star == 0);
    CHECK(rs.members.size() > r.members.size());

    std::vector<WhitneyRegion> one{r};
    CHECK(overlap_count(one) == 1);

    // two far-apart cubes of generation 3
    const auto ta = whitney_region(tree, tree.index_of({3, -16, 0}), eta, K, false, w);
    const auto tb = whitney_region(tree, tree.index_of({3, 15, 0}), eta, K, false, w);
    std::vector<WhitneyRegion> apart{ta, tb};
    CHECK(overlap_count(apart) == 1);

    // all cubes of generations 2 and 3
    std::vector<WhitneyRegion> all;
    for (int k : {2, 3})
        for (int i : tree.generation(k)) all.push_back(whitney_region(tree, i, eta, K, false, w));
    const std::size_t overlap = overlap_count(all);
    CHECK(overlap >= 2);
    CHECK(overlap <= 40);

    // region cardinality is stable under a finer graph sampling
    const auto g2 = flat1(1.0 / 128);
    const auto tree2 = build_cubes_on_graph(g2, 1, 3, base_box(1, -0.25, 0.25));
    const auto w2 = whitney_decompose(g2, domain1(-0.5, 0.5, -1.5, 1.5), {0.5, 7, 1.0 / 16});
    CHECK(whitney_region(tree2, q, eta, K, false, w2).members.size() == r.members.size());
}

TEST_CASE("splitting a region by the regime graph") {
    const auto g = flat1();
    const auto tree = build_cubes_on_graph(g, 1, 3, base_box(1, -0.25, 0.25));
    const double eta = 1.0 / 16, K = 16.0;
    const int q = tree.index_of({2, 0, 0});
    {
        const auto w = whitney_decompose(g, domain1(-0.5, 0.5, -1.5, 1.5), {0.5, 7, 1.0 / 16});
        const auto r = whitney_region(tree, q, eta, K, false, w);
        const auto split = split_region_by_graph(r, tree, w, g);
        CHECK(split.above.size() + split.below.size() == r.members.size());
        CHECK(split.above.size() == split.below.size());
        CHECK(split.min_separation >= 0.25);
        for (std::size_t m : split.above) CHECK(w.cubes[m].box.lo[0] > 0.0);
    }
    {
        const auto w = whitney_decompose(g, domain1(-0.5, 0.5, 0.0, 1.5), {0.5, 7, 1.0 / 16});
        const auto r = whitney_region(tree, q, eta, K, false, w);
        const auto split = split_region_by_graph(r, tree, w, g);
        CHECK(split.below.empty());
        CHECK(!split.above.empty());
    }
    {
        // a regime graph shifted into the region violates the separation
        GraphSpec s;
        s.n = 1;
        s.delta = 1.0 / 64;
        s.box = base_box(1, -2.0, 2.0);
        s.height = 0.2;
        const auto shifted = make_graph(s);
        const auto w = whitney_decompose(g, domain1(-0.5, 0.5, 0.0, 1.5), {0.5, 7, 1.0 / 16});
        const auto r = whitney_region(tree, q, eta, K, false, w);
        CHECK_THROWS_AS(split_region_by_graph(r, tree, w, shifted), AssertionFailure);
    }
}
