#include "pcme/whitney.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "pcme/error.hpp"
#include "pcme/parallel.hpp"

namespace pcme {

namespace {

std::size_t tile_count(double extent, double side, const char* axis) {
    const double q = extent / side;
    const double r = std::round(q);
    if (r < 1.0 || std::abs(q - r) > 1e-9 * std::max(1.0, q))
        throw ParameterError(std::string("whitney: domain extent in ") + axis + " is not a multiple of the root side");
    return static_cast<std::size_t>(r);
}

struct RootResult {
    std::vector<WhitneyCube> cubes;
    double accepted = 0.0, discarded = 0.0, far = 0.0;
    std::size_t n_discarded = 0, n_far = 0;
};

class Subdivider {
public:
    Subdivider(const SampledGraph& g, int max_depth, double min_dist)
        : g_(g), max_depth_(max_depth), min_dist_(min_dist), range_(g.index().full_range()) {}

    void run(const Box& box, double side, int depth, RootResult& out) const {
        const int n = box.dim;
        const double diam = std::sqrt(static_cast<double>(n)) * side + side;
        const double far_cut = 100.0 * diam * (1.0 + 1e-12);
        const double d_box = g_.index().box_distance(box, range_, far_cut);
        if (d_box >= far_cut) {
            out.far += box.volume();
            ++out.n_far;
            return;
        }
        const double d_dilate = g_.index().box_distance(dilate_box(box, 4.0), range_, 4.0 * diam);
        if (d_dilate >= 4.0 * diam) {
            out.cubes.push_back({box, side, diam, d_box, depth});
            out.accepted += box.volume();
            return;
        }
        if (depth == max_depth_ || d_box + diam < min_dist_) {
            out.discarded += box.volume();
            ++out.n_discarded;
            return;
        }
        const double hs = 0.5 * side;
        const double qt = 0.25 * (box.t_hi - box.t_lo);
        const int spatial_children = 1 << n;
        for (int a = 0; a < 4; ++a)
            for (int m = 0; m < spatial_children; ++m) {
                Box c = box;
                c.t_lo = box.t_lo + a * qt;
                c.t_hi = a == 3 ? box.t_hi : c.t_lo + qt;
                for (int i = 0; i < n; ++i) {
                    const bool upper = (m >> i) & 1;
                    c.lo[i] = upper ? box.lo[i] + hs : box.lo[i];
                    c.hi[i] = upper ? box.hi[i] : box.lo[i] + hs;
                }
                run(c, hs, depth + 1, out);
            }
    }

private:
    const SampledGraph& g_;
    int max_depth_;
    double min_dist_;
    IndexRange range_;
};

}  // namespace

Box dilate_box(const Box& b, double k) {
    Box out = b;
    const double ct = 0.5 * (b.t_lo + b.t_hi);
    const double ht = 0.5 * k * k * (b.t_hi - b.t_lo);
    out.t_lo = ct - ht;
    out.t_hi = ct + ht;
    for (int i = 0; i < b.dim; ++i) {
        const double c = 0.5 * (b.lo[i] + b.hi[i]);
        const double h = 0.5 * k * (b.hi[i] - b.lo[i]);
        out.lo[i] = c - h;
        out.hi[i] = c + h;
    }
    return out;
}

std::optional<std::size_t> WhitneyDecomposition::locate(const ParaPoint& p) const {
    for (std::size_t i = 0; i < cubes.size(); ++i)
        if (cubes[i].box.contains(p)) return i;
    return std::nullopt;
}

WhitneyDecomposition whitney_decompose(const SampledGraph& g, const Box& domain, const WhitneyOptions& opt) {
    if (domain.dim != g.n()) throw DimensionError("whitney: domain must live in R^{n+1}");
    const double s = opt.root_side;
    if (!(s > 0.0)) throw ParameterError("whitney: root side must be positive");
    const std::size_t nt = tile_count(domain.t_hi - domain.t_lo, s * s, "t");
    std::array<std::size_t, kMaxSpatial> nx{1, 1};
    for (int i = 0; i < domain.dim; ++i) nx[i] = tile_count(domain.hi[i] - domain.lo[i], s, "x");

    std::vector<Box> roots;
    for (std::size_t a = 0; a < nt; ++a)
        for (std::size_t b = 0; b < nx[0]; ++b)
            for (std::size_t c = 0; c < nx[1]; ++c) {
                Box r = domain;
                r.t_lo = domain.t_lo + static_cast<double>(a) * s * s;
                r.t_hi = a + 1 == nt ? domain.t_hi : r.t_lo + s * s;
                const std::size_t idx[2] = {b, c};
                for (int i = 0; i < domain.dim; ++i) {
                    r.lo[i] = domain.lo[i] + static_cast<double>(idx[i]) * s;
                    r.hi[i] = idx[i] + 1 == nx[i] ? domain.hi[i] : r.lo[i] + s;
                }
                roots.push_back(r);
            }

    std::vector<RootResult> results(roots.size());
    const Subdivider sub(g, opt.max_depth, opt.min_dist);
    parallel_for(roots.size(), [&](std::size_t i) { sub.run(roots[i], s, 0, results[i]); });

    WhitneyDecomposition w;
    w.domain = domain;
    for (RootResult& r : results) {
        w.cubes.insert(w.cubes.end(), r.cubes.begin(), r.cubes.end());
        w.accepted_volume += r.accepted;
        w.discarded_volume += r.discarded;
        w.far_volume += r.far;
        w.discarded += r.n_discarded;
        w.far += r.n_far;
    }
    if (w.cubes.empty()) throw ResolutionError("whitney: no box of the domain qualifies as a Whitney cube");
    std::stable_sort(w.cubes.begin(), w.cubes.end(),
                     [](const WhitneyCube& a, const WhitneyCube& b) { return a.dist_E < b.dist_E; });
    return w;
}

WhitneyRegion whitney_region(const CubeTree& tree, int cube, double eta, double K, bool star,
                             const WhitneyDecomposition& w) {
    if (!(eta > 0.0) || std::abs(eta * K - 1.0) > 1e-12) throw ParameterError("whitney region: eta * K must equal 1");
    const Cube& q = tree.cube(cube);
    const double lo = (star ? std::pow(eta, 4.0) : std::pow(eta, 0.25)) * q.diam;
    const double hi = (star ? K : std::pow(K, 0.25)) * q.diam;
    WhitneyRegion r{cube, eta, K, star, {}};
    auto first = std::lower_bound(w.cubes.begin(), w.cubes.end(), lo,
                                  [](const WhitneyCube& c, double v) { return c.dist_E < v; });
    const GraphIndex& index = tree.graph().index();
    for (auto it = first; it != w.cubes.end() && it->dist_E <= hi; ++it) {
        if (para_dist(it->box, q.hull) > hi) continue;
        const double d = index.box_distance(it->box, q.range, hi * (1.0 + 1e-12));
        if (d <= hi && it->dist_E <= d) r.members.push_back(static_cast<std::size_t>(it - w.cubes.begin()));
    }
    return r;
}

std::size_t overlap_count(std::span<const WhitneyRegion> regions) {
    std::map<std::size_t, std::size_t> count;
    std::size_t best = 0;
    for (const WhitneyRegion& r : regions)
        for (std::size_t m : r.members) best = std::max(best, ++count[m]);
    return best;
}

RegionSplit split_region_by_graph(const WhitneyRegion& region, const CubeTree& tree, const WhitneyDecomposition& w,
                                  const SampledGraph& gamma) {
    const Cube& q = tree.cube(region.cube);
    const double need = std::sqrt(region.eta) * q.diam;
    RegionSplit out;
    out.min_separation = std::numeric_limits<double>::infinity();
    for (std::size_t m : region.members) {
        const WhitneyCube& c = w.cubes[m];
        const double d = gamma.index().box_distance(c.box, gamma.index().full_range(),
                                                    std::numeric_limits<double>::infinity());
        out.min_separation = std::min(out.min_separation, d / q.diam);
        if (d < need)
            throw AssertionFailure("whitney region of cube " + q.id.str() + ": member at distance " + std::to_string(d) +
                                   " from the regime graph, below eta^{1/2} diam(Q) = " + std::to_string(need));
        const ParaPoint center = c.box.center();
        (gamma.vertical_offset(center) > 0.0 ? out.above : out.below).push_back(m);
    }
    return out;
}

nlohmann::json to_json(const WhitneyDecomposition& w) {
    nlohmann::json cubes = nlohmann::json::array();
    for (const WhitneyCube& c : w.cubes) {
        nlohmann::json lo = {c.box.t_lo}, hi = {c.box.t_hi};
        for (int i = 0; i < c.box.dim; ++i) {
            lo.push_back(c.box.lo[i]);
            hi.push_back(c.box.hi[i]);
        }
        cubes.push_back({{"box", {{"lo", lo}, {"hi", hi}}}, {"diam", c.diam}, {"dist_E", c.dist_E}});
    }
    return {{"cubes", std::move(cubes)},
            {"accepted_volume", w.accepted_volume},
            {"discarded_volume", w.discarded_volume},
            {"far_volume", w.far_volume},
            {"discarded", w.discarded},
            {"far", w.far}};
}

nlohmann::json to_json(const WhitneyRegion& r, const CubeTree& tree) {
    const CubeId& id = tree.cube(r.cube).id;
    return {{"cube", {id.k, id.t, id.x}}, {"eta", r.eta}, {"K", r.K}, {"star", r.star}, {"members", r.members}};
}

}  // namespace pcme
