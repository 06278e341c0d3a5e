#include "pcme/corona.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "pcme/error.hpp"

namespace pcme {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

nlohmann::json id_json(const CubeId& id) { return {id.k, id.t, id.x}; }

bool coarser(const CubeTree& tree, int a, int b) {
    const CubeId& x = tree.cube(a).id;
    const CubeId& y = tree.cube(b).id;
    return x < y;  // generation first, then time and space indices
}

}  // namespace

Regime make_regime(const CubeTree& tree, std::vector<int> cubes, SampledGraph graph) {
    if (cubes.empty()) throw ParameterError("regime: empty cube set");
    std::sort(cubes.begin(), cubes.end());
    cubes.erase(std::unique(cubes.begin(), cubes.end()), cubes.end());
    int maximal = cubes.front();
    for (int c : cubes)
        if (coarser(tree, c, maximal)) maximal = c;
    return {std::move(cubes), maximal, std::move(graph)};
}

CoherencyReport validate_coherent(const CubeTree& tree, std::span<const int> cubes, bool require_children) {
    CoherencyReport rep;
    auto violation = [&rep](std::string msg) {
        rep.ok = false;
        rep.violations.push_back(std::move(msg));
    };
    if (cubes.empty()) {
        violation("(a) empty family");
        return rep;
    }
    std::vector<char> in(tree.size(), 0);
    for (int c : cubes) in[static_cast<std::size_t>(c)] = 1;
    int top_generation = tree.k_max();
    for (int c : cubes) top_generation = std::min(top_generation, tree.cube(c).id.k);
    std::vector<int> tops;
    for (int c : cubes)
        if (tree.cube(c).id.k == top_generation) tops.push_back(c);
    if (tops.size() != 1) {
        violation("(a) " + std::to_string(tops.size()) + " cubes of the coarsest generation " + std::to_string(top_generation));
        return rep;
    }
    const int top = tops.front();
    for (int c : cubes) {
        if (c == top) continue;
        if (!tree.is_ancestor(top, c)) {
            violation("(a) cube " + tree.cube(c).id.str() + " is not inside the maximal cube " + tree.cube(top).id.str());
            continue;
        }
        for (int a = tree.cube(c).parent; a >= 0 && a != top; a = tree.cube(a).parent)
            if (!in[static_cast<std::size_t>(a)])
                violation("(b) gap: " + tree.cube(a).id.str() + " lies between " + tree.cube(c).id.str() + " and the maximal cube");
    }
    if (require_children)
        for (int c : cubes) {
            const auto& ch = tree.cube(c).children;
            const auto present = std::count_if(ch.begin(), ch.end(), [&](int x) { return in[static_cast<std::size_t>(x)] != 0; });
            if (present != 0 && static_cast<std::size_t>(present) != ch.size())
                violation("(c) cube " + tree.cube(c).id.str() + " has " + std::to_string(present) + " of " +
                          std::to_string(ch.size()) + " children in the family");
        }
    // (b) may list the same gap several times
    std::sort(rep.violations.begin(), rep.violations.end());
    rep.violations.erase(std::unique(rep.violations.begin(), rep.violations.end()), rep.violations.end());
    return rep;
}

CoronaInput::CoronaInput(std::shared_ptr<const CubeTree> tree, std::vector<Regime> good, std::vector<int> bad,
                         double eta, double b2)
    : tree_(std::move(tree)), good_(std::move(good)), bad_(std::move(bad)), eta_(eta), b2_(b2) {
    if (!tree_) throw ParameterError("corona: missing cube tree");
    if (!(eta_ > 0.0 && eta_ < 1.0)) throw ParameterError("corona: eta must lie in (0, 1)");
    regime_of_.assign(tree_->size(), -2);
    auto claim = [&](int cube, int owner) {
        if (cube < 0 || static_cast<std::size_t>(cube) >= tree_->size())
            throw ConfigError("corona: cube index out of range");
        if (regime_of_[static_cast<std::size_t>(cube)] != -2)
            throw ConfigError("corona: cube " + tree_->cube(cube).id.str() + " is assigned twice");
        regime_of_[static_cast<std::size_t>(cube)] = owner;
    };
    for (std::size_t r = 0; r < good_.size(); ++r) {
        const auto rep = validate_coherent(*tree_, good_[r].cubes, false);
        if (!rep.ok) throw ConfigError("corona: regime " + std::to_string(r) + " is not coherent: " + rep.violations.front());
        for (int c : good_[r].cubes) claim(c, static_cast<int>(r));
    }
    std::sort(bad_.begin(), bad_.end());
    for (int c : bad_) claim(c, -1);
    for (std::size_t i = 0; i < regime_of_.size(); ++i)
        if (regime_of_[i] == -2)
            throw ConfigError("corona: cube " + tree_->cube(static_cast<int>(i)).id.str() + " is neither good nor bad");
}

CoronaInput corona_single_regime(std::shared_ptr<const CubeTree> tree, const SampledGraph& graph, double eta) {
    std::vector<Regime> good;
    for (int root : tree->generation(tree->k_min())) good.push_back(make_regime(*tree, tree->descendants(root), graph));
    return CoronaInput(std::move(tree), std::move(good), {}, eta);
}

CoronaInput corona_all_bad(std::shared_ptr<const CubeTree> tree, double eta) {
    std::vector<int> bad(tree->size());
    for (std::size_t i = 0; i < bad.size(); ++i) bad[i] = static_cast<int>(i);
    return CoronaInput(std::move(tree), {}, std::move(bad), eta);
}

CoronaInput corona_layered(std::shared_ptr<const CubeTree> tree, const SampledGraph& graph, double eta, int depth) {
    if (depth < 1) throw ParameterError("corona: layer depth must be positive");
    std::vector<Regime> good;
    for (int k = tree->k_min(); k <= tree->k_max(); k += depth)
        for (int top : tree->generation(k)) {
            std::vector<int> members;
            for (int c : tree->descendants(top))
                if (tree->cube(c).id.k < k + depth) members.push_back(c);
            good.push_back(make_regime(*tree, std::move(members), graph));
        }
    return CoronaInput(std::move(tree), std::move(good), {}, eta);
}

StoppingDistance::StoppingDistance(std::shared_ptr<const CubeTree> tree, std::span<const int> cubes)
    : tree_(std::move(tree)) {
    if (cubes.empty()) throw ParameterError("stopping distance: empty regime");
    member_.assign(tree_->size(), 0);
    for (int c : cubes) member_[static_cast<std::size_t>(c)] = 1;
    maximal_ = cubes.front();
    for (int c : cubes)
        if (coarser(*tree_, c, maximal_)) maximal_ = c;
    subtree_min_diam_.assign(tree_->size(), kInf);
    // cubes are stored coarse to fine, so a reverse sweep sees children first
    for (std::size_t i = tree_->size(); i-- > 0;) {
        const Cube& c = tree_->cube(static_cast<int>(i));
        double m = member_[i] ? c.diam : kInf;
        for (int ch : c.children) m = std::min(m, subtree_min_diam_[static_cast<std::size_t>(ch)]);
        subtree_min_diam_[i] = m;
    }
    floor_ = kInf;
    for (int c : cubes) floor_ = std::min(floor_, tree_->cube(c).diam);
}

StoppingDistance::Value StoppingDistance::evaluate(const ParaPoint& p) const {
    const CubeTree& tree = *tree_;
    const GraphIndex& index = tree.graph().index();
    using Entry = std::pair<double, int>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
    for (int r : tree.generation(tree.k_min())) {
        const double m = subtree_min_diam_[static_cast<std::size_t>(r)];
        if (m < kInf) open.push({dist_to_cube_bounds(tree, r, p) + m, r});
    }
    Value best{kInf, -1, 0.0};
    auto better = [&](double v, int cube) {
        if (v != best.d) return v < best.d;
        return coarser(tree, cube, best.cube);
    };
    while (!open.empty()) {
        const auto [lb, i] = open.top();
        open.pop();
        if (lb > best.d) break;
        const Cube& c = tree.cube(i);
        if (member_[static_cast<std::size_t>(i)]) {
            // slightly inflated cutoff so that exact ties are still found
            const double cutoff = best.d == kInf ? kInf : (best.d - c.diam) * (1.0 + 1e-12) + 1e-300;
            if (cutoff > 0.0) {
                const NearestSample ns = index.nearest(p, c.range, cutoff);
                if (ns.found && better(ns.dist + c.diam, i)) best = {ns.dist + c.diam, i, ns.dist};
            }
        }
        for (int ch : c.children) {
            const double m = subtree_min_diam_[static_cast<std::size_t>(ch)];
            if (m == kInf) continue;
            const double child_lb = dist_to_cube_bounds(tree, ch, p) + m;
            if (child_lb <= best.d) open.push({child_lb, ch});
        }
    }
    return best;
}

int StoppingDistance::finest_within(const ParaPoint& p, double bound) const {
    const CubeTree& tree = *tree_;
    const GraphIndex& index = tree.graph().index();
    const double cut = bound * (1.0 + 1e-12) + 1e-300;
    int best = -1;
    std::vector<int> stack;
    for (int r : tree.generation(tree.k_min())) stack.push_back(r);
    while (!stack.empty()) {
        const int i = stack.back();
        stack.pop_back();
        const double m = subtree_min_diam_[static_cast<std::size_t>(i)];
        if (m == kInf || dist_to_cube_bounds(tree, i, p) + m > cut) continue;
        const Cube& c = tree.cube(i);
        const bool finer = best < 0 || c.id.k > tree.cube(best).id.k ||
                           (c.id.k == tree.cube(best).id.k && c.id < tree.cube(best).id);
        if (member_[static_cast<std::size_t>(i)] && finer && c.diam < cut &&
            index.nearest(p, c.range, cut - c.diam).found)
            best = i;
        for (int ch : c.children) stack.push_back(ch);
    }
    return best;
}

CubeSelection select_cube(const StoppingDistance& dist, const ParaPoint& p, double A, double epsilon) {
    if (!(A > 1.0)) throw ParameterError("select_cube: A must exceed 1");
    const CubeTree& tree = dist.tree();
    const auto v = dist.evaluate(p);
    const double top = A * tree.cube(dist.maximal()).diam;
    double target;
    if (epsilon > 0.0) {
        if (epsilon >= top) throw ParameterError("select_cube: epsilon must be below A diam(Q(S))");
        if (v.d > epsilon)
            throw ResolutionError("select_cube: no cube of the truncated regime reaches within epsilon");
        target = epsilon;
    } else {
        if (v.d <= 0.0) throw ParameterError("select_cube: d(p) = 0, use the epsilon variant");
        if (2.0 * v.d > top) throw ParameterError("select_cube: 2 d(p) exceeds A diam(Q(S))");
        target = 2.0 * v.d;
    }
    auto enough = [&](int c) {
        const double a = A * tree.cube(c).diam;
        return epsilon > 0.0 ? a > target : a >= target;
    };
    int q = dist.finest_within(p, target);
    if (q < 0) q = v.cube;
    while (!enough(q) && q != dist.maximal()) {
        q = tree.cube(q).parent;
        if (q < 0 || !dist.contains(q)) throw AssertionFailure("select_cube: regime is not closed under ancestors");
    }
    CubeSelection out;
    out.cube = q;
    out.d = v.d;
    out.dist = dist_to_cube(tree, q, p, kInf);
    out.constant = A * tree.cube(q).diam / (epsilon > 0.0 ? epsilon : v.d);
    const double slack = 1e-12 * std::max(1.0, target);
    if (out.dist > target + slack || !enough(q))
        throw AssertionFailure("select_cube: inequalities fail at cube " + tree.cube(q).id.str());
    return out;
}

BilateralReport bilateral_approx_check(const CubeTree& tree, const Regime& regime, double eta, double K) {
    const SampledGraph& e = tree.graph();
    const SampledGraph& gamma = regime.graph;
    const ParaGrid& eg = e.grid();
    const ParaGrid& gg = gamma.grid();
    BilateralReport rep;

    std::vector<double> e_to_gamma(eg.size());
    for (std::size_t i = 0; i < eg.size(); ++i) e_to_gamma[i] = dist_to_graph(e.sample_point(i), gamma, 1.0).dist;

    const Box& ebox = eg.box();
    std::vector<double> gamma_to_e(gg.size(), -1.0);
    for (std::size_t i = 0; i < gg.size(); ++i) {
        const ParaPoint b = gg.point(i);
        bool inside = b.t >= ebox.t_lo && b.t <= ebox.t_hi;
        for (int a = 0; a < ebox.dim; ++a) inside = inside && b.x[a] >= ebox.lo[a] && b.x[a] <= ebox.hi[a];
        if (!inside) {
            ++rep.skipped;
            continue;
        }
        gamma_to_e[i] = dist_to_graph(gamma.sample_point(i), e, 1.0).dist;
    }

    for (int qi : regime.cubes) {
        const Cube& q = tree.cube(qi);
        const double scale = eta * q.diam;
        const double reach = (K - 1.0) * q.diam;
        double sup_set = 0.0;
        for (std::size_t i = 0; i < eg.size(); ++i) {
            if (e_to_gamma[i] <= sup_set) continue;
            const ParaPoint p = e.sample_point(i);
            if (para_dist(p, q.hull) >= reach) continue;
            if (e.index().nearest(p, q.range, reach).found) sup_set = e_to_gamma[i];
        }
        double sup_graph = 0.0;
        const double radius = K * q.diam;
        for (std::size_t i = 0; i < gg.size(); ++i) {
            if (gamma_to_e[i] <= sup_graph) continue;
            if (para_dist(gamma.sample_point(i), q.center) < radius) sup_graph = gamma_to_e[i];
        }
        const double ratio = (sup_set + sup_graph) / scale;
        rep.max_set_to_graph = std::max(rep.max_set_to_graph, sup_set / scale);
        rep.max_graph_to_set = std::max(rep.max_graph_to_set, sup_graph / scale);
        if (ratio > rep.worst_ratio || rep.worst_cube < 0) {
            rep.worst_ratio = std::max(rep.worst_ratio, ratio);
            rep.worst_cube = qi;
        }
    }
    return rep;
}

double packing_check(const CoronaInput& c, int q0, std::span<const double> weights) {
    const CubeTree& tree = c.tree();
    if (weights.size() != tree.size()) throw ParameterError("packing: one weight per cube is required");
    const double base = weights[static_cast<std::size_t>(q0)];
    if (!(base > 0.0)) throw ParameterError("packing: w(Q0) must be positive");
    double sum = 0.0;
    for (int q : tree.descendants(q0)) {
        const int r = c.regime_of(q);
        if (r < 0 || c.good()[static_cast<std::size_t>(r)].maximal == q) sum += weights[static_cast<std::size_t>(q)];
    }
    return sum / base;
}

SubregimeSplit subregime_decompose(const CoronaInput& c, int q0) {
    const CubeTree& tree = c.tree();
    const int own = c.regime_of(q0);
    SubregimeSplit out;
    std::vector<char> whole(c.good().size(), 0);
    std::size_t covered = 0;
    const auto family = tree.descendants(q0);
    for (int q : family) {
        const int r = c.regime_of(q);
        if (r < 0) {
            out.bad.push_back(q);
            ++covered;
        } else if (r == own) {
            out.tail.push_back(q);
            ++covered;
        } else {
            const Regime& reg = c.good()[static_cast<std::size_t>(r)];
            if (!tree.is_ancestor(q0, reg.maximal) || reg.maximal == q0)
                throw ConfigError("corona: regime crosses the boundary of " + tree.cube(q0).id.str());
            if (!whole[static_cast<std::size_t>(r)]) {
                whole[static_cast<std::size_t>(r)] = 1;
                out.regimes.push_back(r);
            }
            ++covered;
        }
    }
    if (covered != family.size()) throw AssertionFailure("corona: decomposition of D_Q0 is not a partition");
    if (!out.tail.empty()) {
        std::sort(out.tail.begin(), out.tail.end());
        const auto rep = validate_coherent(tree, out.tail, false);
        if (!rep.ok) throw AssertionFailure("corona: tail regime below " + tree.cube(q0).id.str() + " is not coherent");
    }
    return out;
}

nlohmann::json to_json(const CoronaInput& c) {
    const CubeTree& tree = c.tree();
    nlohmann::json regimes = nlohmann::json::array();
    for (const Regime& r : c.good()) {
        nlohmann::json cubes = nlohmann::json::array();
        for (int q : r.cubes) cubes.push_back(id_json(tree.cube(q).id));
        regimes.push_back({{"maximal", id_json(tree.cube(r.maximal).id)}, {"cubes", std::move(cubes)}, {"graph", r.graph.label()}});
    }
    nlohmann::json bad = nlohmann::json::array();
    for (int q : c.bad()) bad.push_back(id_json(tree.cube(q).id));
    return {{"regimes", std::move(regimes)}, {"bad", std::move(bad)}, {"eta", c.eta()}};
}

}  // namespace pcme
