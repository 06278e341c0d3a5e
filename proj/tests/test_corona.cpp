#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "doctest.h"
#include "pcme/corona.hpp"
#include "pcme/error.hpp"

using namespace pcme;

namespace {

SampledGraph graph1(double height = 0.0, double amp = 0.0, double delta = 1.0 / 64) {
    GraphSpec s;
    s.n = 1;
    s.delta = delta;
    s.box = base_box(1, -2.0, 2.0);
    s.kind = amp == 0.0 ? "flat" : "sine";
    s.height = height;
    s.amp_t = amp;
    s.k_t = 3.0;
    return make_graph(s);
}

std::shared_ptr<const CubeTree> tree1(const SampledGraph& g, int k_min = 1, int k_max = 4, double half = 0.25) {
    return std::make_shared<const CubeTree>(build_cubes_on_graph(g, k_min, k_max, base_box(1, -half, half)));
}

// Independent evaluation of d by enumerating every member and sample.
double brute_d(const CubeTree& tree, std::span<const int> members, const ParaPoint& p) {
    double best = 1e300;
    for (int q : members) {
        const Cube& c = tree.cube(q);
        double m = 1e300;
        for (std::size_t it = c.range.t0; it < c.range.t1; ++it)
            m = std::min(m, para_dist(p, tree.graph().sample_point(tree.graph().grid().index(it))));
        best = std::min(best, m + c.diam);
    }
    return best;
}

}  // namespace

TEST_CASE("coherency") {
    const auto g = graph1();
    const auto tree = tree1(g);
    const int q0 = tree->index_of({1, -1, 0});
    const int single[] = {q0};
    CHECK(validate_coherent(*tree, single, true).ok);
    const auto all = tree->descendants(q0);
    CHECK(validate_coherent(*tree, all, true).ok);

    // drop an intermediate cube
    const int gap = tree->index_of({2, -4, 0});
    std::vector<int> holed;
    for (int c : all)
        if (c != gap) holed.push_back(c);
    const auto rep = validate_coherent(*tree, holed, false);
    CHECK_FALSE(rep.ok);
    REQUIRE(!rep.violations.empty());
    CHECK(rep.violations.front().find("(b) gap: (k=2, t=-4, x=0)") != std::string::npos);

    // keep one child only
    const int pair[] = {q0, tree->cube(q0).children[0]};
    CHECK(validate_coherent(*tree, pair, false).ok);
    CHECK_FALSE(validate_coherent(*tree, pair, true).ok);

    // two maximal cubes
    const int two[] = {q0, tree->index_of({1, 0, 0})};
    CHECK_FALSE(validate_coherent(*tree, two, false).ok);
}

TEST_CASE("stopping distance") {
    const auto g = graph1(0.0, 0.03);
    const auto tree = tree1(g);
    const int qs = tree->index_of({1, 0, 0});

    SUBCASE("single cube regime") {
        const int members[] = {qs};
        const StoppingDistance d(tree, members);
        const Cube& c = tree->cube(qs);
        const ParaPoint inside = g.sample_point(g.grid().index(c.range.t0 + 5));
        CHECK(d(inside) == doctest::Approx(c.diam));
        const ParaPoint far(1.5, {0.8});
        CHECK(d(far) <= dist_to_cube(*tree, qs, far, 1e300) + c.diam + 1e-12);
        CHECK(d(far) == doctest::Approx(brute_d(*tree, members, far)));
    }
    SUBCASE("all descendants: brute force, Lipschitz bound and truncation floor") {
        const auto members = tree->descendants(qs);
        const StoppingDistance d(tree, members);
        std::mt19937 rng(5);
        std::uniform_real_distribution<double> ut(-0.4, 0.6), ux(-0.5, 0.5);
        for (int k = 0; k < 60; ++k) {
            const ParaPoint p(ut(rng), {ux(rng)});
            CHECK(d(p) == doctest::Approx(brute_d(*tree, members, p)).epsilon(1e-12));
        }
        double worst = 0.0;
        for (int k = 0; k < 3000; ++k) {
            const ParaPoint p(ut(rng), {ux(rng)}), q(ut(rng), {ux(rng)});
            worst = std::max(worst, std::abs(d(p) - d(q)) / para_dist(p, q));
        }
        CHECK(worst <= 1.0 + 1e-9);
        // on Q(S) the truncated d is the diameter of the finest cube at the sample
        const Cube& c = tree->cube(qs);
        double worst_gap = 0.0;
        for (std::size_t it = c.range.t0; it < c.range.t1; ++it) {
            const double dv = d(g.sample_point(it));
            CHECK(dv >= d.floor());
            worst_gap = std::max(worst_gap, dv - tree->cube(tree->owner(tree->k_max(), it)).diam);
        }
        CHECK(worst_gap <= 1e-12);
    }
}

TEST_CASE("cube selection") {
    const auto g = graph1(0.0, 0.03, 1.0 / 256);
    const auto tree = tree1(g, 1, 6);
    const int qs = tree->index_of({1, 0, 0});
    {
        const int members[] = {qs};
        const StoppingDistance d(tree, members);
        const auto sel = select_cube(d, ParaPoint(0.1, {0.2}), 4.0);
        CHECK(sel.cube == qs);
    }
    const auto members = tree->descendants(qs);
    const StoppingDistance d(tree, members);
    // C <= 2 max diam(parent) / diam(child) whenever the walk leaves the
    // starting cube, which the sweep ensures by staying above the floor
    double parent_ratio = 0.0;
    for (int c : members)
        if (c != qs) parent_ratio = std::max(parent_ratio, tree->cube(tree->cube(c).parent).diam / tree->cube(c).diam);
    double finest = 0.0;
    for (int c : tree->generation(tree->k_max())) finest = std::max(finest, tree->cube(c).diam);

    std::mt19937 rng(9);
    std::uniform_real_distribution<double> ut(0.0, 0.25), ux(0.02, 3.0);
    const double As[3] = {2.0, 8.0, 32.0};
    double cmax[3] = {0, 0, 0};
    int used[3] = {0, 0, 0};
    for (int k = 0; k < 150; ++k) {
        const ParaPoint p(ut(rng), {k % 2 ? ux(rng) : -ux(rng)});
        const double dv = d(p);
        for (int a = 0; a < 3; ++a) {
            if (2.0 * dv > As[a] * tree->cube(qs).diam || 2.0 * dv < 2.0 * As[a] * finest) continue;
            const auto sel = select_cube(d, p, As[a]);
            CHECK(sel.dist <= 2.0 * sel.d + 1e-12);
            CHECK(2.0 * sel.d <= As[a] * tree->cube(sel.cube).diam);
            cmax[a] = std::max(cmax[a], sel.constant);
            ++used[a];
        }
    }
    for (int a = 0; a < 3; ++a) {
        CHECK(used[a] > 10);
        CHECK(cmax[a] <= 2.0 * parent_ratio);
    }

    // epsilon variant on the graph, where d sits at the truncation floor
    const ParaPoint on = g.sample_point(tree->cube(qs).range.t0 + 100);
    const auto sel = select_cube(d, on, 4.0, 0.5);
    CHECK(sel.dist <= 0.5);
    CHECK(4.0 * tree->cube(sel.cube).diam > 0.5);
    CHECK_THROWS_AS(select_cube(d, on, 4.0, d.floor() / 2), ResolutionError);
    CHECK_THROWS_AS(select_cube(d, ParaPoint(0.1, {50.0}), 2.0), ParameterError);
}

TEST_CASE("bilateral approximation") {
    const auto e = graph1(0.0, 0.03);
    const auto tree = tree1(e, 1, 3);
    const double eta = 1.0 / 16, K = 16.0;
    const int q0 = tree->index_of({1, 0, 0});
    {
        const auto r = make_regime(*tree, tree->descendants(q0), e);
        const auto rep = bilateral_approx_check(*tree, r, eta, K);
        CHECK(rep.worst_ratio == 0.0);
        CHECK(rep.passed());
    }
    double min_diam = 1e300;
    for (const Cube& c : tree->cubes()) min_diam = std::min(min_diam, c.diam);
    const double eps = 0.4 * eta * min_diam;
    {
        GraphSpec s;
        s.n = 1;
        s.delta = 1.0 / 64;
        s.box = base_box(1, -2.0, 2.0);
        s.kind = "sine";
        s.amp_t = 0.03;
        s.k_t = 3.0;
        const auto shifted = make_graph(s);
        const SampledGraph offset(1, ScalarField::sample(shifted.grid(), [eps](const ParaPoint& b) {
                                      return 0.03 * std::sin(3.0 * b.t) + eps;
                                  }),
                                  shifted.b1(), 0.0);
        const auto r = make_regime(*tree, tree->descendants(q0), offset);
        const auto rep = bilateral_approx_check(*tree, r, eta, K);
        CHECK(rep.passed());
        CHECK(rep.worst_ratio > 0.0);
        // each supremum is at most the offset
        CHECK(rep.max_set_to_graph <= eps / (eta * min_diam) + 1e-9);
    }
    {
        // small fast wiggle on top of E
        const double w = 0.002;
        const SampledGraph wiggly(1, ScalarField::sample(e.grid(), [w](const ParaPoint& b) {
                                      return 0.03 * std::sin(3.0 * b.t) + w * std::sin(40.0 * b.t);
                                  }),
                                  e.b1(), 0.0);
        const auto r = make_regime(*tree, tree->descendants(q0), wiggly);
        const auto rep = bilateral_approx_check(*tree, r, eta, K);
        CHECK(rep.worst_ratio > 0.0);
        CHECK(rep.max_set_to_graph <= w / (eta * min_diam) + 1e-9);
        CHECK(rep.max_graph_to_set <= w / (eta * min_diam) + 1e-9);
        CHECK(rep.worst_ratio <= 2.0 * w / (eta * min_diam) + 1e-9);
    }
}

TEST_CASE("packing and the decomposition of D_Q0") {
    const auto g = graph1();
    const auto tree = tree1(g, 0, 4, 1.0);
    std::vector<double> sigma(tree->size());
    for (std::size_t i = 0; i < sigma.size(); ++i) sigma[i] = tree->cube(static_cast<int>(i)).measure;
    const int root = tree->generation(0)[0];

    const auto single = corona_single_regime(tree, g, 1.0 / 16);
    CHECK(packing_check(single, root, sigma) == doctest::Approx(1.0));

    const auto bad = corona_all_bad(tree, 1.0 / 16);
    CHECK(packing_check(bad, root, sigma) == doctest::Approx(5.0));
    const int mid = tree->generation(2)[3];
    CHECK(packing_check(bad, mid, sigma) == doctest::Approx(3.0));
    CHECK_THROWS_AS(packing_check(bad, root, std::vector<double>(tree->size(), 0.0)), ParameterError);

    // Q0 = Q(S*)
    const auto s0 = subregime_decompose(single, root);
    CHECK(s0.bad.empty());
    CHECK(s0.regimes.empty());
    CHECK(s0.tail.size() == tree->descendants(root).size());

    // Q0 bad
    const auto sb = subregime_decompose(bad, mid);
    CHECK(sb.tail.empty());
    CHECK(sb.bad.size() == tree->descendants(mid).size());

    // layered corona: exhaustive partition check on every Q0
    const auto layered = corona_layered(tree, g, 1.0 / 16, 2);
    for (std::size_t q = 0; q < tree->size(); ++q) {
        const auto split = subregime_decompose(layered, static_cast<int>(q));
        std::size_t total = split.bad.size() + split.tail.size();
        for (int r : split.regimes) total += layered.good()[static_cast<std::size_t>(r)].cubes.size();
        CHECK(total == tree->descendants(static_cast<int>(q)).size());
    }
    // a root of the layered corona sees its own two layers plus the regimes below
    const auto sr = subregime_decompose(layered, root);
    CHECK(sr.tail.size() == 1 + 4);
    CHECK(sr.regimes.size() == 16 + 256);
    CHECK(packing_check(layered, root, sigma) == doctest::Approx(3.0));
}

TEST_CASE("corona input validation and export") {
    const auto g = graph1();
    const auto tree = tree1(g, 0, 2, 1.0);
    const int root = tree->generation(0)[0];
    auto members = tree->descendants(root);
    std::vector<Regime> good{make_regime(*tree, members, g)};
    CHECK_THROWS_AS(CoronaInput(tree, good, {root}, 1.0 / 16), ConfigError);
    members.pop_back();
    std::vector<Regime> partial{make_regime(*tree, members, g)};
    CHECK_THROWS_AS(CoronaInput(tree, partial, {}, 1.0 / 16), ConfigError);
    const auto c = corona_layered(tree, g, 1.0 / 16, 1);
    const auto j = to_json(c);
    CHECK(j["regimes"].size() == tree->size() / 1);
    CHECK(j["eta"] == 1.0 / 16);
}
