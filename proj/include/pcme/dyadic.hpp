#pragma once

// Parabolic dyadic cubes on a graph set E = F(R^n). A base cube of
// generation k is [a 4^{-k}, (a+1) 4^{-k}) x [b 2^{-k}, (b+1) 2^{-k})^{n-1}
// in (t, x'); the cube on E is its image under F. Every cube is a
// rectangular index range on the graph's sampling grid.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "pcme/pargeo.hpp"

namespace pcme {

struct CubeId {
    int k = 0;
    std::int64_t t = 0;  // time index, side 4^{-k}
    std::int64_t x = 0;  // spatial index, side 2^{-k}; always 0 when n == 1

    CubeId parent() const;
    std::string str() const;
    auto operator<=>(const CubeId&) const = default;
};

struct CubeIdHash {
    std::size_t operator()(const CubeId& id) const noexcept;
};

struct Cube {
    CubeId id;
    IndexRange range;   // samples of the graph grid
    Box base;           // base cube in (t, x')
    Box hull;           // bounds of F(Q) in R^{n+1}, f range taken over samples
    ParaPoint center;   // F(center of base)
    double diam = 0.0;  // sqrt((n-1) side^2 + osc(f)^2) + sqrt(time side)
    double measure = 0.0;
    int parent = -1;
    std::vector<int> children;
};

class CubeTree {
public:
    CubeTree(SampledGraph graph, int k_min, int k_max, const Box& region);

    const SampledGraph& graph() const { return graph_; }
    int k_min() const { return k_min_; }
    int k_max() const { return k_max_; }
    const Box& region() const { return region_; }

    std::size_t size() const { return cubes_.size(); }
    const Cube& cube(int i) const { return cubes_[static_cast<std::size_t>(i)]; }
    std::span<const Cube> cubes() const { return cubes_; }
    /// Indices of the cubes of generation k, sorted by id.
    std::span<const int> generation(int k) const;
    std::optional<int> find(const CubeId& id) const;
    int index_of(const CubeId& id) const;  // throws ParameterError when absent

    /// Cube of generation k containing sample i, or -1 outside the region.
    int owner(int k, std::size_t sample) const;
    /// Every cube whose range contains the sample, coarse to fine.
    std::vector<int> chain(std::size_t sample) const;

    /// Q and all of its descendants down to k_max, coarse to fine.
    std::vector<int> descendants(int i) const;
    bool is_ancestor(int ancestor, int i) const;

    /// Radius factor a0 with E cap B(center, a0 2^{-k}) inside Q.
    static constexpr double a0 = 0.5;

    /// Test hook: reassigns a sample's owner in one generation without
    /// touching the cube records, so that the axiom checker can be
    /// exercised against a broken tree.
    void inject_owner_fault(int k, std::size_t sample, int cube);

private:
    SampledGraph graph_;
    int k_min_;
    int k_max_;
    Box region_;
    std::vector<Cube> cubes_;
    std::vector<std::vector<int>> by_generation_;
    std::vector<std::vector<std::int32_t>> owners_;
    std::unordered_map<CubeId, int, CubeIdHash> lookup_;
};

/// Dyadic cubes of generations [k_min, k_max] over `region` (defaults to
/// the whole graph box). The region must be aligned to generation k_min
/// and 2^{-k_max} must be an integer multiple of at least 4 grid steps.
CubeTree build_cubes_on_graph(const SampledGraph& g, int k_min, int k_max, std::optional<Box> region = {});

/// Parabolic distance from a point of R^{n+1} to the samples of Q;
/// returns `cutoff` when nothing is closer.
double dist_to_cube(const CubeTree& tree, int cube, const ParaPoint& p, double cutoff);
/// Lower bound on dist(p, Q) for every cube in the subtree of `cube`.
double dist_to_cube_bounds(const CubeTree& tree, int cube, const ParaPoint& p);

/// Samples of E with dist(p, Q) < (K - 1) diam(Q); K must exceed 1.
std::vector<std::size_t> dilate(const CubeTree& tree, int cube, double factor);

struct CubeAxiomReport {
    std::size_t cubes = 0;
    double min_diam_ratio = 0.0;  // diam(Q) / 2^{-k}
    double max_diam_ratio = 0.0;
    double min_measure_ratio = 0.0;  // sigma(Q) / 2^{-k(n+1)}
    double max_measure_ratio = 0.0;
    std::vector<double> varrho;
    std::vector<double> boundary_fraction;  // mean over cubes of sigma(layer) / sigma(Q)
    double gamma = 0.0;                     // fitted exponent of the thin-boundary layer
    double gamma_constant = 0.0;            // c with fraction <= c varrho^gamma on the samples
};

/// Checks partition, nesting, unique ancestors, diameter scaling and the
/// a0 ball property on every sample; throws AssertionFailure naming the
/// first offending cube. Fits the boundary-layer exponent on `varrho`.
CubeAxiomReport verify_cube_axioms(const CubeTree& tree, std::span<const double> varrho);

nlohmann::json to_json(const CubeTree& tree);

}  // namespace pcme
