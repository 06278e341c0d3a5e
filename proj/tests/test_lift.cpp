#include <algorithm>
#include <cmath>
#include <memory>

#include "doctest.h"
#include "pcme/corona.hpp"
#include "pcme/error.hpp"
#include "pcme/lift.hpp"

using namespace pcme;

namespace {

constexpr double kEta = 1.0 / 16;

SampledGraph graph1(double amp = 0.0, double delta = 1.0 / 64) {
    GraphSpec s;
    s.n = 1;
    s.delta = delta;
    s.box = base_box(1, -2.0, 2.0);
    s.kind = amp == 0.0 ? "flat" : "sine";
    s.amp_t = amp;
    s.k_t = 3.0;
    return make_graph(s);
}

std::shared_ptr<const CubeTree> tree1(const SampledGraph& g, int k_max = 3) {
    return std::make_shared<const CubeTree>(build_cubes_on_graph(g, 1, k_max, base_box(1, -0.25, 0.25)));
}

RegimeLift full_regime(const std::shared_ptr<const CubeTree>& tree, const SampledGraph& f) {
    const int q0 = tree->index_of({1, 0, 0});
    return RegimeLift(tree, make_regime(*tree, tree->descendants(q0), f), kEta);
}

// Exhaustive Lip(1/2,1) quotient over every pair of a strided subsample.
double pair_sweep_lip(const ScalarField& g, std::size_t stride) {
    const ParaGrid& grid = g.grid();
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < grid.size(); i += stride) idx.push_back(i);
    double best = 0.0;
    for (std::size_t a = 0; a < idx.size(); ++a)
        for (std::size_t b = a + 1; b < idx.size(); ++b) {
            const double d = para_dist(grid.point(idx[a]), grid.point(idx[b]));
            best = std::max(best, std::abs(g[idx[a]] - g[idx[b]]) / d);
        }
    return best;
}

}  // namespace

TEST_CASE("lift parameters") {
    const auto g = graph1();
    const auto tree = tree1(g, 2);
    const int q0 = tree->index_of({1, 0, 0});
    const Regime r = make_regime(*tree, tree->descendants(q0), g);
    CHECK_THROWS_AS(RegimeLift(tree, r, 0.5), ParameterError);
    CHECK_THROWS_AS(RegimeLift(tree, r, 0.0), ParameterError);
    const RegimeLift ctx(tree, r, kEta);
    CHECK(ctx.K() == doctest::Approx(16.0));
    CHECK_THROWS_AS(lift_graph(ctx, 0.8, 1), ParameterError);
    CHECK_THROWS_AS(lift_graph(ctx, 1.0, 1), ParameterError);
    CHECK_THROWS_AS(lift_graph(ctx, 7.0 / 8.0, 0), ParameterError);
}

TEST_CASE("single cube lift") {
    const auto g = graph1();
    const auto tree = tree1(g, 2);
    const int q0 = tree->index_of({1, 0, 0});
    const int only[] = {q0};
    const RegimeLift ctx(tree, make_regime(*tree, {only[0]}, g), kEta);
    const Cube& q = tree->cube(q0);
    for (double alpha : {7.0 / 8.0, 15.0 / 16.0, 31.0 / 32.0}) {
        const LiftedGraph up = lift_graph(ctx, alpha, 1);
        const LiftedGraph down = lift_graph(ctx, alpha, -1);
        // inside Q the only candidate gives d = 0 + diam(Q)
        for (std::size_t it = q.range.t0; it < q.range.t1; it += 7) {
            const std::size_t i = g.grid().index(it);
            CHECK(up.graph.field()[i] == doctest::Approx(std::pow(kEta, alpha) * q.diam));
            CHECK(down.graph.field()[i] == doctest::Approx(-std::pow(kEta, alpha) * q.diam));
        }
        // outside Q: dist to the nearest sample of Q plus its diameter
        const std::size_t far = g.grid().index(g.grid().nt() - 3);
        const double expect = dist_to_cube(*tree, q0, g.sample_point(far), 1e9) + q.diam;
        CHECK(up.graph.field()[far] == doctest::Approx(std::pow(kEta, alpha) * expect));
    }
}

TEST_CASE("lifted graph invariants") {
    const auto E = graph1(0.02);
    REQUIRE(E.b1() <= kEta);
    const auto tree = tree1(E);
    const RegimeLift ctx = full_regime(tree, E);
    const LiftedGraph hi = lift_graph(ctx, 7.0 / 8.0, 1);
    const LiftedGraph lo = lift_graph(ctx, 31.0 / 32.0, 1);
    const LiftedGraph neg = lift_graph(ctx, 7.0 / 8.0, -1);

    SUBCASE("Lip bound on a full pair sweep") {
        const double sweep = pair_sweep_lip(hi.graph.field(), 16);
        CHECK(sweep > 0.0);
        CHECK(sweep <= 3.0 * std::pow(kEta, 7.0 / 8.0));
        CHECK(hi.lip <= hi.lip_bound);
        CHECK(pair_sweep_lip(lo.graph.field(), 16) <= 3.0 * std::pow(kEta, 31.0 / 32.0));
    }
    SUBCASE("stopping distance of the lifted graph") {
        for (const LiftedGraph* l : {&hi, &lo, &neg}) {
            CHECK(l->min_dG_ratio >= 0.5);
            CHECK(l->max_dG_ratio <= 2.0);
        }
    }
    SUBCASE("monotone in alpha and symmetric in sign") {
        for (std::size_t i = 0; i < E.grid().size(); ++i) {
            CHECK(hi.graph.field()[i] >= lo.graph.field()[i]);
            CHECK(hi.graph.field()[i] + neg.graph.field()[i] == doctest::Approx(2.0 * E.field()[i]));
        }
    }
}

TEST_CASE("E below the lifted graph") {
    SUBCASE("flat graph, closed-form margin") {
        const auto g = graph1();
        const auto tree = tree1(g, 2);
        const int q0 = tree->index_of({1, 0, 0});
        const RegimeLift ctx(tree, make_regime(*tree, {q0}, g), kEta);
        const Cube& q = tree->cube(q0);
        const LiftedGraph up = lift_graph(ctx, 7.0 / 8.0, 1);
        const auto checks = check_E_below(ctx, up, {q.center, 0.25 * ctx.K() * q.diam});
        REQUIRE(checks.size() == 4);
        for (const Check& c : checks) CHECK_MESSAGE(c.pass, c.name);
        // g - x_n = eta^alpha d exactly and the vertical segment bounds the distance
        CHECK(checks[2].value == doctest::Approx(1.0));
        CHECK(checks[1].value <= 1.0 + 1e-9);
        CHECK(checks[0].value >= 0.5);
        CHECK(checks[3].value == doctest::Approx(0.0));
    }
    SUBCASE("sine graph") {
        const auto E = graph1(0.02);
        const auto tree = tree1(E);
        const RegimeLift ctx = full_regime(tree, E);
        const Cube& q = tree->cube(ctx.maximal());
        for (int sign : {1, -1}) {
            const auto checks = check_E_below(ctx, lift_graph(ctx, 31.0 / 32.0, sign), {q.center, 0.25 * ctx.K() * q.diam});
            for (const Check& c : checks) CHECK_MESSAGE(c.pass, c.name);
        }
    }
}

TEST_CASE("psi construction") {
    const auto E = graph1(0.02);
    const auto tree = tree1(E);
    const RegimeLift ctx = full_regime(tree, E);
    const PsiPair psi = build_psi(ctx, PsiOptions{false, Box{0, 0, {}, {}, -1}});
    const ScalarField& f = E.field();
    for (std::size_t i = 0; i < E.grid().size(); ++i) {
        CHECK(psi.plus.graph.field()[i] >= f[i]);
        CHECK(psi.minus.graph.field()[i] <= f[i]);
        CHECK(psi.plus.graph.field()[i] - f[i] ==
              doctest::Approx(std::pow(kEta, 15.0 / 16.0) * psi.H_samples[i]).epsilon(1e-12));
    }
    // H is comparable to h = d / 2 with the regularized-distance constants
    CHECK(psi.c1 >= 1.0 / 60);
    CHECK(psi.c2 <= 0.6 * static_cast<double>(psi.H->whitney().overlap));
    CHECK(psi.sandwich.samples > 0);
    CHECK(psi.plus.lip <= psi.plus.lip_bound);
    CHECK(psi.pbmo_plus <= psi.pbmo_bound);
    CHECK(psi.pbmo_minus <= psi.pbmo_bound);

    // the report and the assertion agree
    if (psi.sandwich.holds) {
        CHECK_NOTHROW(require_sandwich(psi.sandwich));
    } else {
        CHECK_THROWS_AS(require_sandwich(psi.sandwich), AssertionFailure);
        CHECK_THROWS_AS(build_psi(ctx), AssertionFailure);
    }
}

TEST_CASE("corona domain report") {
    const auto E = graph1();
    const auto tree = tree1(E, 2);
    const RegimeLift ctx = full_regime(tree, E);
    DomainOptions opt;
    opt.whitney.max_depth = 5;
    opt.lattice = 16;
    const DomainReport rep = corona_domain_report(ctx, opt);
    CHECK(rep.whitney_cubes > 0);
    CHECK(rep.regions == tree->descendants(ctx.maximal()).size());

    for (const char* name : {"whitney.separation", "clause1.ball[+]", "clause1.side[+]", "clause1.ball[-]",
                             "clause1.side[-]", "clause3.dist[+]", "clause3.dist[-]", "clause4.cover[+]",
                             "clause4.cover[-]"}) {
        const Check* c = rep.find(name);
        REQUIRE_MESSAGE(c != nullptr, name);
        CHECK_MESSAGE(c->pass, name, " ", c->value, " ", c->witness);
    }
    // E is the regime graph, so both distances nearly coincide
    const Check* lo = rep.find("clause2.ratio_min[+]");
    const Check* hi = rep.find("clause2.ratio_max[+]");
    REQUIRE(lo != nullptr);
    REQUIRE(hi != nullptr);
    CHECK(lo->value >= 0.9);
    CHECK(hi->value <= 1.5);

    // clause 5 closed form: E flat at height 0, so the nearest Gamma point is
    // below the cube center and c_S sits eta^{15/16} H above it
    const Cube& q = tree->cube(ctx.maximal());
    const double K = ctx.K(), D = q.diam;
    const Check* outer = rep.find("clause5.outer[+]");
    REQUIRE(outer != nullptr);
    const double gap_lo = 0.0, gap_hi = std::pow(kEta, 15.0 / 16.0) * D;
    CHECK(outer->value >= (gap_lo + 4.0 * std::pow(K, 0.75) * D) / (std::pow(K, 7.0 / 8.0) * D) - 1e-9);
    CHECK(outer->value <= (gap_hi + 4.0 * std::pow(K, 0.75) * D) / (std::pow(K, 7.0 / 8.0) * D) + 1e-9);
    CHECK_FALSE(outer->pass);  // needs K^{1/8} >= M0, far beyond K = 16

    const nlohmann::json j = to_json(rep);
    CHECK(j["checks"].size() == rep.checks.size());
    CHECK(j["passed"].get<bool>() == rep.passed());
}
