#pragma once

// Whitney decomposition of the complement of a graph set E in a space-time
// box, and the Whitney regions U_Q attached to dyadic cubes on E.

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pcme/dyadic.hpp"
#include "pcme/pargeo.hpp"

namespace pcme {

struct WhitneyCube {
    Box box;  // spatial side s, time side s^2
    double side = 0.0;
    double diam = 0.0;  // sqrt(n) s + s
    double dist_E = 0.0;
    int depth = 0;
};

/// Parabolic dilate: same center, spatial sides times k, time side times k^2.
Box dilate_box(const Box& b, double k);

struct WhitneyOptions {
    double root_side = 0.5;  // spatial side of the root boxes tiling the domain
    int max_depth = 8;       // subdivisions below the roots
    /// Boxes whose every point lies closer than this to E are dropped
    /// without subdivision and counted as discarded.
    double min_dist = 0.0;
};

struct WhitneyDecomposition {
    Box domain;
    std::vector<WhitneyCube> cubes;  // sorted by dist_E
    double accepted_volume = 0.0;
    double discarded_volume = 0.0;  // boxes still too close to E at max depth
    double far_volume = 0.0;        // root boxes farther than 100 diam from E
    std::size_t discarded = 0;
    std::size_t far = 0;

    /// Index of the accepted cube whose box contains p.
    std::optional<std::size_t> locate(const ParaPoint& p) const;
};

/// Top-down subdivision of `domain` (a box in R^{n+1}); a box I is kept when
/// 4 diam(I) <= dist(4I, E) and dist(I, E) <= 100 diam(I).
WhitneyDecomposition whitney_decompose(const SampledGraph& g, const Box& domain, const WhitneyOptions& opt = {});

struct WhitneyRegion {
    int cube = -1;  // index in the cube tree
    double eta = 0.0;
    double K = 0.0;
    bool star = false;
    std::vector<std::size_t> members;  // indices into the decomposition
};

/// W_Q (eta^{1/4} diam Q <= dist(I,E) <= dist(I,Q) <= K^{1/4} diam Q) or,
/// with `star`, W*_Q (eta^4 and K). Requires eta K = 1.
WhitneyRegion whitney_region(const CubeTree& tree, int cube, double eta, double K, bool star,
                             const WhitneyDecomposition& w);

/// Largest number of regions sharing one Whitney cube.
std::size_t overlap_count(std::span<const WhitneyRegion> regions);

struct RegionSplit {
    std::vector<std::size_t> above;
    std::vector<std::size_t> below;
    double min_separation = 0.0;  // min over members of dist(I, Gamma) / diam(Q)
};

/// Splits W_Q by the side of `gamma` containing each member's center and
/// asserts dist(I, Gamma) >= eta^{1/2} diam(Q) for every member.
RegionSplit split_region_by_graph(const WhitneyRegion& region, const CubeTree& tree, const WhitneyDecomposition& w,
                                  const SampledGraph& gamma);

nlohmann::json to_json(const WhitneyDecomposition& w);
nlohmann::json to_json(const WhitneyRegion& r, const CubeTree& tree);

}  // namespace pcme
