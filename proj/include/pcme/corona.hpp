#pragma once

// Stopping-time regimes on a cube tree: coherency, the stopping distance
// d(p) = inf_{Q in S} dist(p, Q) + diam(Q), cube selection, bilateral
// approximation diagnostics and Carleson packing sums.

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcme/dyadic.hpp"
#include "pcme/pargeo.hpp"

namespace pcme {

struct Regime {
    std::vector<int> cubes;  // tree indices, ascending
    int maximal = -1;        // coarsest member (first by id on ties)
    SampledGraph graph;      // approximating regular graph
};

/// Sorts the members and picks the coarsest one as the maximal cube.
Regime make_regime(const CubeTree& tree, std::vector<int> cubes, SampledGraph graph);

struct CoherencyReport {
    bool ok = true;
    std::vector<std::string> violations;
};

/// Conditions (a) unique maximal element, (b) closed under intermediate
/// ancestors and, when `require_children`, (c) all-or-none children.
CoherencyReport validate_coherent(const CubeTree& tree, std::span<const int> cubes, bool require_children);

/// Good regimes plus bad cubes covering the whole tree.
class CoronaInput {
public:
    CoronaInput(std::shared_ptr<const CubeTree> tree, std::vector<Regime> good, std::vector<int> bad, double eta,
                double b2 = 0.0);

    const CubeTree& tree() const { return *tree_; }
    const std::shared_ptr<const CubeTree>& shared_tree() const { return tree_; }
    std::span<const Regime> good() const { return good_; }
    std::span<const int> bad() const { return bad_; }
    double eta() const { return eta_; }
    double K() const { return 1.0 / eta_; }
    double b2() const { return b2_; }
    /// Regime index of a cube, or -1 for bad cubes.
    int regime_of(int cube) const { return regime_of_[static_cast<std::size_t>(cube)]; }

private:
    std::shared_ptr<const CubeTree> tree_;
    std::vector<Regime> good_;
    std::vector<int> bad_;
    double eta_;
    double b2_;
    std::vector<int> regime_of_;
};

/// One regime per root cube holding all of its descendants.
CoronaInput corona_single_regime(std::shared_ptr<const CubeTree> tree, const SampledGraph& graph, double eta);
/// Every cube bad.
CoronaInput corona_all_bad(std::shared_ptr<const CubeTree> tree, double eta);
/// Regimes cut every `depth` generations: each root starts a regime with
/// the generations k_min .. k_min + depth - 1 of its subtree, and each cube
/// at the next cut generation starts a new one.
CoronaInput corona_layered(std::shared_ptr<const CubeTree> tree, const SampledGraph& graph, double eta, int depth);

/// Stopping distance of a regime, evaluated by branch and bound over the
/// tree. The infimum is truncated at k_max, so d >= min diam over S.
class StoppingDistance {
public:
    StoppingDistance(std::shared_ptr<const CubeTree> tree, std::span<const int> cubes);

    struct Value {
        double d = 0.0;
        int cube = -1;  // minimizer (ties: coarser generation, then smaller id)
        double dist = 0.0;
    };

    Value evaluate(const ParaPoint& p) const;
    /// Finest member Q with dist(p, Q) + diam(Q) <= bound (ties: smaller id),
    /// or -1.
    int finest_within(const ParaPoint& p, double bound) const;
    double operator()(const ParaPoint& p) const { return evaluate(p).d; }
    const CubeTree& tree() const { return *tree_; }
    bool contains(int cube) const { return member_[static_cast<std::size_t>(cube)] != 0; }
    int maximal() const { return maximal_; }
    /// Smallest diameter in S, the truncation floor of d.
    double floor() const { return floor_; }

private:
    std::shared_ptr<const CubeTree> tree_;
    std::vector<char> member_;
    std::vector<double> subtree_min_diam_;
    int maximal_ = -1;
    double floor_ = 0.0;
};

struct CubeSelection {
    int cube = -1;
    double d = 0.0;
    double dist = 0.0;      // dist(p, Q*)
    double constant = 0.0;  // A diam(Q*) / d, the measured C of the lemma
};

/// Cube Q* in S with dist(p, Q*) <= 2d <= A diam(Q*) <= C d: the smallest
/// S-ancestor with A diam >= 2d of the finest Q in S with
/// dist(p, Q) + diam(Q) <= 2d. With epsilon > 0 the
/// target 2d is replaced by epsilon and the middle inequality is strict.
/// Every returned cube has its inequalities asserted.
CubeSelection select_cube(const StoppingDistance& d, const ParaPoint& p, double A, double epsilon = 0.0);

struct BilateralReport {
    double worst_ratio = 0.0;  // max over Q of the sum of the two suprema over eta diam(Q)
    int worst_cube = -1;
    double max_set_to_graph = 0.0;  // sup over KQ of dist(p, Gamma) / (eta diam Q)
    double max_graph_to_set = 0.0;  // sup over B_Q^* cap Gamma of dist(p, E) / (eta diam Q)
    std::size_t skipped = 0;        // Gamma samples outside the window of E
    bool passed() const { return worst_ratio < 1.0; }
};

/// Samples the bilateral approximation condition of a regime against the
/// set E carried by the tree.
BilateralReport bilateral_approx_check(const CubeTree& tree, const Regime& regime, double eta, double K);

/// [sum of w over bad Q' in D_{Q0} + sum of w(Q(S*)) over regimes with
/// maximal cube in D_{Q0}] / w(Q0).
double packing_check(const CoronaInput& c, int q0, std::span<const double> weights);

struct SubregimeSplit {
    std::vector<int> bad;      // bad cubes of D_{Q0}
    std::vector<int> regimes;  // regimes with maximal cube strictly inside Q0
    std::vector<int> tail;     // S* cap D_{Q0} for the regime of Q0; empty when Q0 is bad
};

/// Three-way partition of D_{Q0}; verifies the partition and the coherency
/// of the tail.
SubregimeSplit subregime_decompose(const CoronaInput& c, int q0);

nlohmann::json to_json(const CoronaInput& c);

}  // namespace pcme
