#include "pcme/dyadic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "pcme/error.hpp"

namespace pcme {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

double side_t(int k) { return std::ldexp(1.0, -2 * k); }
double side_x(int k) { return std::ldexp(1.0, -k); }

// Rounds value / step to an integer and insists that it is one.
std::int64_t exact_multiple(double value, double step, const char* what) {
    const double q = value / step;
    const double r = std::round(q);
    if (std::abs(q - r) > 1e-7 * std::max(1.0, std::abs(q)))
        throw ParameterError(std::string("dyadic alignment: ") + what + " is not a multiple of the step");
    return static_cast<std::int64_t>(r);
}

}  // namespace

CubeId CubeId::parent() const { return {k - 1, floor_div(t, 4), floor_div(x, 2)}; }

std::string CubeId::str() const {
    std::ostringstream s;
    s << "(k=" << k << ", t=" << t << ", x=" << x << ")";
    return s.str();
}

std::size_t CubeIdHash::operator()(const CubeId& id) const noexcept {
    std::size_t h = std::hash<std::int64_t>{}(id.t);
    h ^= std::hash<std::int64_t>{}(id.x) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h ^= std::hash<int>{}(id.k) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h;
}

CubeTree::CubeTree(SampledGraph graph, int k_min, int k_max, const Box& region)
    : graph_(std::move(graph)), k_min_(k_min), k_max_(k_max), region_(region) {
    const ParaGrid& grid = graph_.grid();
    const int n = graph_.n();
    if (k_max < k_min) throw ParameterError("cube tree: k_max < k_min");
    if (region.dim != n - 1) throw DimensionError("cube tree: region must have n - 1 spatial axes");
    if (side_x(k_max) < 4.0 * grid.delta() * (1.0 - 1e-12))
        throw ResolutionError("cube tree: 2^{-k_max} is below 4 grid steps");
    exact_multiple(side_x(k_max), grid.delta(), "finest cube side");
    const Box& gb = grid.box();
    if (region.t_lo < gb.t_lo - 1e-12 || region.t_hi > gb.t_hi + 1e-12)
        throw OutOfWindowError("cube tree: region leaves the graph box");
    for (int i = 0; i < region.dim; ++i)
        if (region.lo[i] < gb.lo[i] - 1e-12 || region.hi[i] > gb.hi[i] + 1e-12)
            throw OutOfWindowError("cube tree: region leaves the graph box");

    const std::int64_t ta = exact_multiple(region.t_lo, side_t(k_min), "region start in t");
    const std::int64_t tb = exact_multiple(region.t_hi, side_t(k_min), "region end in t");
    std::int64_t xa = 0, xb = 1;
    if (n == 2) {
        xa = exact_multiple(region.lo[0], side_x(k_min), "region start in x");
        xb = exact_multiple(region.hi[0], side_x(k_min), "region end in x");
    }
    exact_multiple(region.t_lo - gb.t_lo, grid.time_step(), "region offset in t");
    if (n == 2) exact_multiple(region.lo[0] - gb.lo[0], grid.delta(), "region offset in x");

    auto make_cube = [&](const CubeId& id) {
        Cube c;
        c.id = id;
        c.base.dim = n - 1;
        c.base.t_lo = static_cast<double>(id.t) * side_t(id.k);
        c.base.t_hi = c.base.t_lo + side_t(id.k);
        c.range.t0 = static_cast<std::size_t>(std::llround((c.base.t_lo - gb.t_lo) / grid.time_step()));
        c.range.t1 = c.range.t0 + static_cast<std::size_t>(std::llround(side_t(id.k) / grid.time_step()));
        if (n == 2) {
            c.base.lo[0] = static_cast<double>(id.x) * side_x(id.k);
            c.base.hi[0] = c.base.lo[0] + side_x(id.k);
            c.range.x0 = static_cast<std::size_t>(std::llround((c.base.lo[0] - gb.lo[0]) / grid.delta()));
            c.range.x1 = c.range.x0 + static_cast<std::size_t>(std::llround(side_x(id.k) / grid.delta()));
        }
        const Box fb = graph_.index().bounds(c.range);
        c.hull.dim = n;
        c.hull.t_lo = c.base.t_lo;
        c.hull.t_hi = c.base.t_hi;
        if (n == 2) {
            c.hull.lo[0] = c.base.lo[0];
            c.hull.hi[0] = c.base.hi[0];
        }
        c.hull.lo[n - 1] = fb.lo[n - 1];
        c.hull.hi[n - 1] = fb.hi[n - 1];
        const double osc = fb.hi[n - 1] - fb.lo[n - 1];
        c.diam = std::sqrt((n - 1) * side_x(id.k) * side_x(id.k) + osc * osc) + std::sqrt(side_t(id.k));
        c.measure = static_cast<double>(c.range.count()) * grid.cell_volume();
        c.center = graph_.lift(c.base.center());
        return c;
    };

    const int generations = k_max - k_min + 1;
    by_generation_.resize(static_cast<std::size_t>(generations));
    owners_.assign(static_cast<std::size_t>(generations), std::vector<std::int32_t>(grid.size(), -1));

    std::vector<CubeId> ids;
    for (std::int64_t t = ta; t < tb; ++t)
        for (std::int64_t x = xa; x < xb; ++x) ids.push_back({k_min, t, x});
    for (int k = k_min; k <= k_max; ++k) {
        std::sort(ids.begin(), ids.end());
        auto& gen = by_generation_[static_cast<std::size_t>(k - k_min)];
        auto& own = owners_[static_cast<std::size_t>(k - k_min)];
        for (const CubeId& id : ids) {
            const int idx = static_cast<int>(cubes_.size());
            cubes_.push_back(make_cube(id));
            Cube& c = cubes_.back();
            if (k > k_min) {
                c.parent = lookup_.at(id.parent());
                cubes_[static_cast<std::size_t>(c.parent)].children.push_back(idx);
            }
            lookup_.emplace(id, idx);
            gen.push_back(idx);
            for (std::size_t it = c.range.t0; it < c.range.t1; ++it)
                for (std::size_t ix = c.range.x0; ix < c.range.x1; ++ix) own[grid.index(it, ix)] = idx;
        }
        std::vector<CubeId> next;
        next.reserve(ids.size() * (n == 2 ? 8 : 4));
        for (const CubeId& id : ids)
            for (std::int64_t dt = 0; dt < 4; ++dt)
                for (std::int64_t dx = 0; dx < (n == 2 ? 2 : 1); ++dx) next.push_back({k + 1, 4 * id.t + dt, 2 * id.x + dx});
        ids = std::move(next);
    }
}

std::span<const int> CubeTree::generation(int k) const {
    if (k < k_min_ || k > k_max_) return {};
    return by_generation_[static_cast<std::size_t>(k - k_min_)];
}

std::optional<int> CubeTree::find(const CubeId& id) const {
    const auto it = lookup_.find(id);
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
}

int CubeTree::index_of(const CubeId& id) const {
    const auto i = find(id);
    if (!i) throw ParameterError("cube " + id.str() + " is not in the tree");
    return *i;
}

int CubeTree::owner(int k, std::size_t sample) const {
    if (k < k_min_ || k > k_max_) return -1;
    return owners_[static_cast<std::size_t>(k - k_min_)][sample];
}

std::vector<int> CubeTree::chain(std::size_t sample) const {
    std::vector<int> out;
    for (int k = k_min_; k <= k_max_; ++k) {
        const int o = owner(k, sample);
        if (o >= 0) out.push_back(o);
    }
    return out;
}

std::vector<int> CubeTree::descendants(int i) const {
    std::vector<int> out{i};
    for (std::size_t head = 0; head < out.size(); ++head)
        for (int c : cube(out[head]).children) out.push_back(c);
    return out;
}

bool CubeTree::is_ancestor(int ancestor, int i) const {
    for (int j = i; j >= 0; j = cube(j).parent)
        if (j == ancestor) return true;
    return false;
}

void CubeTree::inject_owner_fault(int k, std::size_t sample, int cube) {
    owners_.at(static_cast<std::size_t>(k - k_min_)).at(sample) = cube;
}

CubeTree build_cubes_on_graph(const SampledGraph& g, int k_min, int k_max, std::optional<Box> region) {
    return CubeTree(g, k_min, k_max, region.value_or(g.grid().box()));
}

double dist_to_cube(const CubeTree& tree, int cube, const ParaPoint& p, double cutoff) {
    return tree.graph().index().nearest(p, tree.cube(cube).range, cutoff).dist;
}

double dist_to_cube_bounds(const CubeTree& tree, int cube, const ParaPoint& p) {
    return para_dist(p, tree.cube(cube).hull);
}

std::vector<std::size_t> dilate(const CubeTree& tree, int cube, double factor) {
    if (!(factor > 1.0)) throw ParameterError("dilate: factor must exceed 1");
    const Cube& q = tree.cube(cube);
    const SampledGraph& g = tree.graph();
    const ParaGrid& grid = g.grid();
    const double reach = (factor - 1.0) * q.diam;
    auto window = [](double lo_frac, double hi_frac, std::size_t count, std::size_t& a, std::size_t& b) {
        a = static_cast<std::size_t>(std::clamp(std::floor(lo_frac), 0.0, static_cast<double>(count)));
        b = static_cast<std::size_t>(std::clamp(std::ceil(hi_frac) + 1.0, 0.0, static_cast<double>(count)));
    };
    IndexRange w;
    window(grid.t_frac(q.base.t_lo - reach * reach), grid.t_frac(q.base.t_hi + reach * reach), grid.nt(), w.t0, w.t1);
    if (g.n() == 2) window(grid.x_frac(0, q.base.lo[0] - reach), grid.x_frac(0, q.base.hi[0] + reach), grid.nx(0), w.x0, w.x1);
    std::vector<std::size_t> out;
    for (std::size_t it = w.t0; it < w.t1; ++it)
        for (std::size_t ix = w.x0; ix < w.x1; ++ix) {
            const std::size_t i = grid.index(it, ix);
            const ParaPoint p = g.sample_point(i);
            if (para_dist(p, q.hull) >= reach) continue;
            if (g.index().nearest(p, q.range, reach).found) out.push_back(i);
        }
    return out;
}

CubeAxiomReport verify_cube_axioms(const CubeTree& tree, std::span<const double> varrho) {
    const SampledGraph& g = tree.graph();
    const ParaGrid& grid = g.grid();
    const int n = g.n();
    auto fail = [](const std::string& what, const Cube& c) {
        throw AssertionFailure("cube axiom violated (" + what + ") at cube " + c.id.str());
    };

    // samples of the region
    std::vector<std::size_t> region_samples;
    for (int r : tree.generation(tree.k_min()))
        for (std::size_t it = tree.cube(r).range.t0; it < tree.cube(r).range.t1; ++it)
            for (std::size_t ix = tree.cube(r).range.x0; ix < tree.cube(r).range.x1; ++ix)
                region_samples.push_back(grid.index(it, ix));

    // (ii) nesting, via the owner maps
    for (int k = tree.k_min() + 1; k <= tree.k_max(); ++k)
        for (std::size_t s : region_samples) {
            const int child = tree.owner(k, s);
            const int parent = tree.owner(k - 1, s);
            if (child < 0 || parent < 0)
                throw AssertionFailure("cube axiom violated (partition): sample " + std::to_string(s) + " has no owner");
            if (tree.cube(child).parent != parent) fail("nesting: sample " + std::to_string(s) + " has an owner outside its parent", tree.cube(child));
        }

    // (i) partition and (iii) unique ancestors
    CubeAxiomReport rep;
    rep.min_diam_ratio = rep.min_measure_ratio = std::numeric_limits<double>::infinity();
    for (int k = tree.k_min(); k <= tree.k_max(); ++k) {
        std::size_t covered = 0;
        for (int i : tree.generation(k)) {
            const Cube& c = tree.cube(i);
            for (std::size_t it = c.range.t0; it < c.range.t1; ++it)
                for (std::size_t ix = c.range.x0; ix < c.range.x1; ++ix)
                    if (tree.owner(k, grid.index(it, ix)) != i) fail("partition: a sample of the cube is owned elsewhere", c);
            covered += c.range.count();
            if (c.parent >= 0 && tree.cube(c.parent).id != c.id.parent()) fail("ancestor: parent record disagrees with id", c);
            if (k > tree.k_min() && c.parent < 0) fail("ancestor: missing parent", c);
            if (!c.children.empty()) {
                double sum = 0.0;
                for (int ch : c.children) sum += tree.cube(ch).measure;
                if (std::abs(sum - c.measure) > 1e-9 * c.measure) fail("partition: children measures do not add up", c);
            }
            const double scale = side_x(k);
            rep.min_diam_ratio = std::min(rep.min_diam_ratio, c.diam / scale);
            rep.max_diam_ratio = std::max(rep.max_diam_ratio, c.diam / scale);
            const double mr = c.measure / std::pow(scale, n + 1);
            rep.min_measure_ratio = std::min(rep.min_measure_ratio, mr);
            rep.max_measure_ratio = std::max(rep.max_measure_ratio, mr);
            ++rep.cubes;
        }
        if (covered != region_samples.size()) fail("partition: generation does not cover the region", tree.cube(tree.generation(k)[0]));
    }

    // (v) a0 ball around the center stays inside the cube
    for (const Cube& c : tree.cubes()) {
        const int self = tree.index_of(c.id);
        const double r = CubeTree::a0 * side_x(c.id.k);
        const std::size_t t0 = static_cast<std::size_t>(std::clamp(std::floor(grid.t_frac(c.center.t - r * r)), 0.0, double(grid.nt())));
        const std::size_t t1 = static_cast<std::size_t>(std::clamp(std::ceil(grid.t_frac(c.center.t + r * r)) + 1, 0.0, double(grid.nt())));
        std::size_t x0 = 0, x1 = 1;
        if (n == 2) {
            x0 = static_cast<std::size_t>(std::clamp(std::floor(grid.x_frac(0, c.center.x[0] - r)), 0.0, double(grid.nx(0))));
            x1 = static_cast<std::size_t>(std::clamp(std::ceil(grid.x_frac(0, c.center.x[0] + r)) + 1, 0.0, double(grid.nx(0))));
        }
        for (std::size_t it = t0; it < t1; ++it)
            for (std::size_t ix = x0; ix < x1; ++ix) {
                const std::size_t s = grid.index(it, ix);
                if (para_dist(g.sample_point(s), c.center) < r && tree.owner(c.id.k, s) != self)
                    fail("ball property: E near the center leaves the cube", c);
            }
    }

    // (vi) boundary layer fit
    if (varrho.empty()) return rep;
    rep.varrho.assign(varrho.begin(), varrho.end());
    const double rho_min = *std::min_element(varrho.begin(), varrho.end());
    const double rho_max = *std::max_element(varrho.begin(), varrho.end());
    std::vector<double> fraction(varrho.size(), 0.0);
    std::size_t used = 0;
    const Box& gb = grid.box();
    for (int k = tree.k_min(); k <= tree.k_max(); ++k) {
        const double s = side_x(k);
        if (rho_min * s < 4.0 * grid.delta()) continue;
        const double cut = rho_max * s;
        for (int i : tree.generation(k)) {
            const Cube& c = tree.cube(i);
            // skip cubes whose complement is truncated by the graph box
            bool interior = c.base.t_lo - cut * cut >= gb.t_lo && c.base.t_hi + cut * cut <= gb.t_hi;
            if (n == 2) interior = interior && c.base.lo[0] - cut >= gb.lo[0] && c.base.hi[0] + cut <= gb.hi[0];
            if (!interior) continue;
            const IndexRange full = g.index().full_range();
            const IndexRange& q = c.range;
            std::vector<IndexRange> outside{{full.t0, q.t0, full.x0, full.x1}, {q.t1, full.t1, full.x0, full.x1}};
            if (n == 2) {
                outside.push_back({q.t0, q.t1, full.x0, q.x0});
                outside.push_back({q.t0, q.t1, q.x1, full.x1});
            }
            // thin the samples, keeping several per layer width in each direction
            const double layer = rho_min * s;
            const std::size_t st = std::max<std::size_t>(1, static_cast<std::size_t>(layer * layer / grid.time_step() / 4.0));
            const std::size_t sx = std::max<std::size_t>(1, static_cast<std::size_t>(layer / grid.delta() / 4.0));
            std::vector<double> count(varrho.size(), 0.0);
            double visited = 0.0;
            for (std::size_t it = q.t0 + st / 2; it < q.t1; it += st)
                for (std::size_t ix = q.x0 + (n == 2 ? sx / 2 : 0); ix < q.x1; ix += sx) {
                    visited += 1.0;
                    const ParaPoint p = g.sample_point(grid.index(it, ix));
                    double lower = std::sqrt(std::min(p.t - c.base.t_lo, c.base.t_hi - p.t));
                    if (n == 2) lower = std::min(lower, std::min(p.x[0] - c.base.lo[0], c.base.hi[0] - p.x[0]));
                    if (lower > cut) continue;
                    double d = cut;
                    for (const IndexRange& o : outside)
                        if (!o.empty()) d = std::min(d, g.index().nearest(p, o, d).dist);
                    for (std::size_t j = 0; j < varrho.size(); ++j)
                        if (d <= varrho[j] * s) count[j] += 1.0;
                }
            for (std::size_t j = 0; j < varrho.size(); ++j) fraction[j] += count[j] / visited;
            ++used;
        }
    }
    if (used == 0) throw ResolutionError("cube axioms: no cube resolves the requested boundary layers");
    rep.boundary_fraction.resize(varrho.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t m = 0;
    for (std::size_t j = 0; j < varrho.size(); ++j) {
        rep.boundary_fraction[j] = fraction[j] / static_cast<double>(used);
        if (rep.boundary_fraction[j] <= 0.0) continue;
        const double x = std::log(varrho[j]), y = std::log(rep.boundary_fraction[j]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++m;
    }
    if (m >= 2) {
        const double denom = static_cast<double>(m) * sxx - sx * sx;
        rep.gamma = (static_cast<double>(m) * sxy - sx * sy) / denom;
        for (std::size_t j = 0; j < varrho.size(); ++j)
            rep.gamma_constant = std::max(rep.gamma_constant, rep.boundary_fraction[j] / std::pow(varrho[j], rep.gamma));
    }
    return rep;
}

nlohmann::json to_json(const CubeTree& tree) {
    nlohmann::json cubes = nlohmann::json::array();
    for (const Cube& c : tree.cubes()) {
        nlohmann::json center = {c.center.t};
        for (int i = 0; i < c.center.dim; ++i) center.push_back(c.center.x[i]);
        nlohmann::json item = {{"id", {c.id.k, c.id.t, c.id.x}}, {"center", center}, {"diam", c.diam}, {"measure", c.measure}};
        item["parent"] = c.parent >= 0 ? nlohmann::json({tree.cube(c.parent).id.k, tree.cube(c.parent).id.t, tree.cube(c.parent).id.x})
                                       : nlohmann::json(nullptr);
        cubes.push_back(std::move(item));
    }
    return {{"n", tree.graph().n()}, {"k_min", tree.k_min()}, {"k_max", tree.k_max()}, {"cubes", std::move(cubes)}};
}

}  // namespace pcme
