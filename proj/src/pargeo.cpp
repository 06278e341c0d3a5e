#include "pcme/pargeo.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "pcme/error.hpp"

namespace pcme {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double gap(double lo_a, double hi_a, double lo_b, double hi_b) {
    if (hi_a < lo_b) return lo_b - hi_a;
    if (hi_b < lo_a) return lo_a - hi_b;
    return 0.0;
}

std::size_t checked_count(double extent, double step, const char* axis) {
    const double ratio = extent / step;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-6 * std::max(1.0, ratio)) {
        std::ostringstream msg;
        msg << "grid extent along " << axis << " (" << extent << ") is not a positive multiple of the step " << step;
        throw ParameterError(msg.str());
    }
    return static_cast<std::size_t>(rounded);
}

}  // namespace

ParaPoint::ParaPoint(double time, std::initializer_list<double> space) : t(time) {
    if (space.size() > static_cast<std::size_t>(kMaxSpatial)) throw DimensionError("at most two spatial coordinates");
    std::copy(space.begin(), space.end(), x.begin());
    dim = static_cast<int>(space.size());
}

double para_dist(const ParaPoint& p, const ParaPoint& q) {
    if (p.dim != q.dim) throw DimensionError("para_dist: dimension mismatch");
    double s = 0.0;
    for (int i = 0; i < p.dim; ++i) s += (p.x[i] - q.x[i]) * (p.x[i] - q.x[i]);
    return std::sqrt(s) + std::sqrt(std::abs(p.t - q.t));
}

double Box::volume() const {
    double v = t_hi - t_lo;
    for (int i = 0; i < dim; ++i) v *= hi[i] - lo[i];
    return v;
}

bool Box::contains(const ParaPoint& p) const {
    if (p.t < t_lo || p.t >= t_hi) return false;
    for (int i = 0; i < dim; ++i)
        if (p.x[i] < lo[i] || p.x[i] >= hi[i]) return false;
    return true;
}

ParaPoint Box::center() const {
    ParaPoint c;
    c.dim = dim;
    c.t = 0.5 * (t_lo + t_hi);
    for (int i = 0; i < dim; ++i) c.x[i] = 0.5 * (lo[i] + hi[i]);
    return c;
}

double Box::para_diam() const {
    double s = 0.0;
    for (int i = 0; i < dim; ++i) s += (hi[i] - lo[i]) * (hi[i] - lo[i]);
    return std::sqrt(s) + std::sqrt(t_hi - t_lo);
}

double para_dist(const ParaPoint& p, const Box& b) {
    if (p.dim != b.dim) throw DimensionError("para_dist(point, box): dimension mismatch");
    double s = 0.0;
    for (int i = 0; i < p.dim; ++i) {
        const double g = gap(p.x[i], p.x[i], b.lo[i], b.hi[i]);
        s += g * g;
    }
    return std::sqrt(s) + std::sqrt(gap(p.t, p.t, b.t_lo, b.t_hi));
}

double para_dist(const Box& a, const Box& b) {
    if (a.dim != b.dim) throw DimensionError("para_dist(box, box): dimension mismatch");
    double s = 0.0;
    for (int i = 0; i < a.dim; ++i) {
        const double g = gap(a.lo[i], a.hi[i], b.lo[i], b.hi[i]);
        s += g * g;
    }
    return std::sqrt(s) + std::sqrt(gap(a.t_lo, a.t_hi, b.t_lo, b.t_hi));
}

// ---- ParaGrid ------------------------------------------------------------

ParaGrid::ParaGrid(const Box& box, double delta) : box_(box), delta_(delta) {
    if (!(delta > 0.0) || !std::isfinite(delta)) throw ParameterError("grid step must be positive");
    if (box.dim < 0 || box.dim > kMaxSpatial) throw DimensionError("grid dimension must be 0, 1 or 2");
    nt_ = checked_count(box.t_hi - box.t_lo, delta * delta, "t");
    size_ = nt_;
    for (int i = 0; i < kMaxSpatial; ++i) {
        if (i < box.dim) {
            nx_[i] = checked_count(box.hi[i] - box.lo[i], delta, "x");
        } else {
            nx_[i] = 1;
        }
        size_ *= nx_[i];
    }
}

std::array<std::size_t, 3> ParaGrid::unravel(std::size_t i) const {
    const std::size_t ix1 = i % nx_[1];
    i /= nx_[1];
    const std::size_t ix0 = i % nx_[0];
    return {i / nx_[0], ix0, ix1};
}

ParaPoint ParaGrid::point(std::size_t i) const {
    const auto [it, ix0, ix1] = unravel(i);
    ParaPoint p;
    p.dim = dim();
    p.t = t_at(it);
    if (dim() > 0) p.x[0] = x_at(0, ix0);
    if (dim() > 1) p.x[1] = x_at(1, ix1);
    return p;
}

double ParaGrid::cell_volume() const { return std::pow(delta_, dim() + 2); }

double ParaGrid::covering_radius() const {
    return delta_ * (0.5 * std::sqrt(static_cast<double>(dim())) + std::sqrt(0.5));
}

// ---- ScalarField -----------------------------------------------------------

ScalarField::ScalarField(ParaGrid grid, std::vector<double> values, ClosedForm closed_form)
    : ScalarField(std::move(grid), std::make_shared<const std::vector<double>>(std::move(values)),
                  std::move(closed_form)) {}

ScalarField::ScalarField(ParaGrid grid, std::shared_ptr<const std::vector<double>> values, ClosedForm closed_form)
    : grid_(std::move(grid)), values_(std::move(values)), closed_form_(std::move(closed_form)) {
    if (!values_ || values_->size() != grid_.size()) throw ParameterError("field size does not match its grid");
}

ScalarField ScalarField::sample(const ParaGrid& grid, ClosedForm closed_form) {
    std::vector<double> v(grid.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = closed_form(grid.point(i));
    return ScalarField(grid, std::move(v), std::move(closed_form));
}

double ScalarField::eval(const ParaPoint& base) const {
    if (closed_form_) return closed_form_(base);
    return interpolate(base);
}

double ScalarField::interpolate(const ParaPoint& base) const {
    if (base.dim != grid_.dim()) throw DimensionError("field evaluation: dimension mismatch");
    auto locate = [](double frac, std::size_t count, std::size_t& i0, double& w) {
        if (count == 1) {
            i0 = 0;
            w = 0.0;
            return;
        }
        frac = std::clamp(frac, 0.0, static_cast<double>(count - 1));
        i0 = std::min(static_cast<std::size_t>(frac), count - 2);
        w = frac - static_cast<double>(i0);
    };
    std::size_t it, ix;
    double wt, wx;
    locate(grid_.t_frac(base.t), grid_.nt(), it, wt);
    if (grid_.dim() == 0) {
        const double a = (*values_)[grid_.index(it)];
        const double b = grid_.nt() > 1 ? (*values_)[grid_.index(it + 1)] : a;
        return (1.0 - wt) * a + wt * b;
    }
    if (grid_.dim() > 1) throw DimensionError("interpolation supports base grids with at most one spatial axis");
    locate(grid_.x_frac(0, base.x[0]), grid_.nx(0), ix, wx);
    const std::size_t it1 = grid_.nt() > 1 ? it + 1 : it;
    const std::size_t ix1 = grid_.nx(0) > 1 ? ix + 1 : ix;
    const double v00 = (*values_)[grid_.index(it, ix)];
    const double v01 = (*values_)[grid_.index(it, ix1)];
    const double v10 = (*values_)[grid_.index(it1, ix)];
    const double v11 = (*values_)[grid_.index(it1, ix1)];
    return (1.0 - wt) * ((1.0 - wx) * v00 + wx * v01) + wt * ((1.0 - wx) * v10 + wx * v11);
}

double lip_half_one(const ScalarField& field, std::size_t random_pairs, unsigned seed) {
    const ParaGrid& g = field.grid();
    const auto v = field.values();
    const std::size_t nt = g.nt();
    const std::size_t nx = g.nx(0);
    std::vector<std::size_t> t_off{0};
    for (std::size_t s = 1; s < nt; s *= 2) t_off.push_back(s);
    std::vector<long> x_off{0};
    if (g.dim() > 0)
        for (std::size_t s = 1; s < nx; s *= 2) {
            x_off.push_back(static_cast<long>(s));
            x_off.push_back(-static_cast<long>(s));
        }
    double best = 0.0;
    for (std::size_t dt : t_off) {
        for (long dx : x_off) {
            if (dt == 0 && dx <= 0) continue;
            const double dist = std::abs(static_cast<double>(dx)) * g.delta() +
                                std::sqrt(static_cast<double>(dt) * g.time_step());
            // coarse offsets see smooth variation only, so thin the base points
            const std::size_t reach = std::max<std::size_t>(dt, static_cast<std::size_t>(std::abs(dx)));
            const std::size_t stride = std::max<std::size_t>(1, reach / 4);
            for (std::size_t it = 0; it + dt < nt; it += stride) {
                for (std::size_t ix = 0; ix < nx; ix += stride) {
                    const long jx = static_cast<long>(ix) + dx;
                    if (jx < 0 || jx >= static_cast<long>(nx)) continue;
                    const double d = std::abs(v[g.index(it, ix)] - v[g.index(it + dt, static_cast<std::size_t>(jx))]);
                    best = std::max(best, d / dist);
                }
            }
        }
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
    for (std::size_t k = 0; k < random_pairs && g.size() > 1; ++k) {
        const std::size_t i = pick(rng), j = pick(rng);
        if (i == j) continue;
        best = std::max(best, std::abs(v[i] - v[j]) / para_dist(g.point(i), g.point(j)));
    }
    return best;
}

// ---- GraphIndex ------------------------------------------------------------

IndexRange IndexRange::intersect(const IndexRange& o) const {
    return {std::max(t0, o.t0), std::min(t1, o.t1), std::max(x0, o.x0), std::min(x1, o.x1)};
}

GraphIndex::GraphIndex(const ParaGrid& base, std::shared_ptr<const std::vector<double>> values)
    : base_(base), values_(std::move(values)) {
    nodes_.reserve(2 * base_.size() / 16 + 8);
    build(full_range());
}

IndexRange GraphIndex::full_range() const { return {0, base_.nt(), 0, base_.nx(0)}; }

ParaPoint GraphIndex::graph_point(std::size_t i) const {
    ParaPoint p = base_.point(i);
    p.x[p.dim] = (*values_)[i];
    p.dim += 1;
    return p;
}

Box GraphIndex::leaf_bounds(const IndexRange& r) const {
    Box b;
    b.dim = base_.dim() + 1;
    b.t_lo = base_.t_at(r.t0);
    b.t_hi = base_.t_at(r.t1 - 1);
    if (base_.dim() > 0) {
        b.lo[0] = base_.x_at(0, r.x0);
        b.hi[0] = base_.x_at(0, r.x1 - 1);
    }
    double fmin = kInf, fmax = -kInf;
    for (std::size_t it = r.t0; it < r.t1; ++it)
        for (std::size_t ix = r.x0; ix < r.x1; ++ix) {
            const double f = (*values_)[base_.index(it, ix)];
            fmin = std::min(fmin, f);
            fmax = std::max(fmax, f);
        }
    b.lo[b.dim - 1] = fmin;
    b.hi[b.dim - 1] = fmax;
    return b;
}

Box GraphIndex::bounds(const IndexRange& range) const { return leaf_bounds(range); }

int GraphIndex::build(const IndexRange& r) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({r, {}, -1, -1});
    if (r.count() <= 32) {
        nodes_[id].bounds = leaf_bounds(r);
        return id;
    }
    const double t_extent = std::sqrt(static_cast<double>(r.t1 - r.t0) * base_.time_step());
    const double x_extent = static_cast<double>(r.x1 - r.x0) * base_.delta();
    IndexRange a = r, b = r;
    if ((t_extent >= x_extent && r.t1 - r.t0 > 1) || r.x1 - r.x0 == 1) {
        const std::size_t mid = r.t0 + (r.t1 - r.t0) / 2;
        a.t1 = mid;
        b.t0 = mid;
    } else {
        const std::size_t mid = r.x0 + (r.x1 - r.x0) / 2;
        a.x1 = mid;
        b.x0 = mid;
    }
    const int left = build(a);
    const int right = build(b);
    Box box = nodes_[left].bounds;
    const Box& rb = nodes_[right].bounds;
    box.t_lo = std::min(box.t_lo, rb.t_lo);
    box.t_hi = std::max(box.t_hi, rb.t_hi);
    for (int i = 0; i < box.dim; ++i) {
        box.lo[i] = std::min(box.lo[i], rb.lo[i]);
        box.hi[i] = std::max(box.hi[i], rb.hi[i]);
    }
    nodes_[id].bounds = box;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

template <class LowerBound, class Exact>
void GraphIndex::descend(int node, const IndexRange& range, double& best, std::size_t& best_index, bool& found,
                         const LowerBound& lower, const Exact& exact) const {
    const Node& nd = nodes_[node];
    const IndexRange r = nd.range.intersect(range);
    if (r.empty()) return;
    if (lower(nd.bounds) >= best) return;
    if (nd.left < 0) {
        for (std::size_t it = r.t0; it < r.t1; ++it)
            for (std::size_t ix = r.x0; ix < r.x1; ++ix) {
                const std::size_t i = base_.index(it, ix);
                const double d = exact(graph_point(i));
                if (d < best) {
                    best = d;
                    best_index = i;
                    found = true;
                }
            }
        return;
    }
    const double la = lower(nodes_[nd.left].bounds);
    const double lb = lower(nodes_[nd.right].bounds);
    if (la <= lb) {
        descend(nd.left, range, best, best_index, found, lower, exact);
        descend(nd.right, range, best, best_index, found, lower, exact);
    } else {
        descend(nd.right, range, best, best_index, found, lower, exact);
        descend(nd.left, range, best, best_index, found, lower, exact);
    }
}

NearestSample GraphIndex::nearest(const ParaPoint& p, const IndexRange& range, double cutoff) const {
    NearestSample out;
    out.dist = cutoff;
    descend(
        0, range, out.dist, out.index, out.found, [&](const Box& b) { return para_dist(p, b); },
        [&](const ParaPoint& q) { return para_dist(p, q); });
    return out;
}

double GraphIndex::box_distance(const Box& box, const IndexRange& range, double cutoff) const {
    double best = cutoff;
    std::size_t idx = 0;
    bool found = false;
    descend(
        0, range, best, idx, found, [&](const Box& b) { return para_dist(box, b); },
        [&](const ParaPoint& q) { return para_dist(q, box); });
    return best;
}

// ---- SampledGraph ------------------------------------------------------------

SampledGraph::SampledGraph(int n, ScalarField f, double b1, double b2, std::string label)
    : n_(n), f_(std::move(f)), b1_(b1), b2_(b2), label_(std::move(label)) {
    if (n_ < 1 || n_ > 2) throw DimensionError("graphs are supported for n in {1, 2}");
    if (f_.grid().dim() != n_ - 1) throw DimensionError("graph base grid must have n - 1 spatial axes");
    index_ = std::make_shared<const GraphIndex>(f_.grid(), f_.shared_values());
}

ParaPoint SampledGraph::lift(const ParaPoint& base) const {
    ParaPoint p = base;
    p.x[n_ - 1] = eval(base);
    p.dim = n_;
    return p;
}

ParaPoint SampledGraph::sample_point(std::size_t i) const {
    ParaPoint p = grid().point(i);
    p.x[n_ - 1] = f_[i];
    p.dim = n_;
    return p;
}

ParaPoint SampledGraph::project(const ParaPoint& p) const {
    if (p.dim != n_) throw DimensionError("point is not in R^{n+1} of this graph");
    ParaPoint b = p;
    b.dim = n_ - 1;
    b.x[n_ - 1] = 0.0;
    return b;
}

double SampledGraph::vertical_offset(const ParaPoint& p) const { return p.x[n_ - 1] - eval(project(p)); }

double SampledGraph::sampling_radius() const { return (1.0 + b1_) * grid().covering_radius(); }

GraphDistance dist_to_graph(const ParaPoint& p, const SampledGraph& g, double margin) {
    const ParaPoint base = g.project(p);
    const Box& box = g.grid().box();
    bool inside = base.t >= box.t_lo - margin * margin && base.t <= box.t_hi + margin * margin;
    for (int i = 0; i < box.dim; ++i) inside = inside && base.x[i] >= box.lo[i] - margin && base.x[i] <= box.hi[i] + margin;
    if (!inside) throw OutOfWindowError("dist_to_graph: point lies outside the graph window");
    GraphDistance out;
    out.vertical = std::abs(g.vertical_offset(p));
    out.dist = out.vertical;
    out.foot = base;
    // Any competitor closer than the vertical distance lies within the
    // parabolic ball of that radius, which the index search prunes to.
    const NearestSample ns = g.index().nearest(p, g.index().full_range(), out.vertical);
    if (ns.found && ns.dist < out.dist) {
        out.dist = ns.dist;
        out.foot = g.grid().point(ns.index);
    }
    if (box.dim == 1) {
        // Samples sit up to delta^2 / 2 off p.t, which costs delta / sqrt(2)
        // in the metric. At time p.t take the graph as piecewise linear in x'
        // between sample columns and the exact distance to each segment.
        const ParaGrid& grid = g.grid();
        const double t = std::clamp(base.t, grid.t_at(0), grid.t_at(grid.nt() - 1));
        const double dt = std::sqrt(std::abs(p.t - t));
        const double last = static_cast<double>(grid.nx(0) - 1);
        const double lo = std::clamp(std::floor(grid.x_frac(0, p.x[0] - out.dist)), 0.0, last);
        const double hi = std::clamp(std::ceil(grid.x_frac(0, p.x[0] + out.dist)), 0.0, last);
        auto at = [&](double j) {
            const double x = grid.x_at(0, static_cast<std::size_t>(j));
            return std::array<double, 2>{x, g.eval(ParaPoint(t, {x}))};
        };
        std::array<double, 2> a = at(lo);
        for (double j = lo + 1.0; j <= hi; j += 1.0) {
            const std::array<double, 2> b = at(j);
            const double ex = b[0] - a[0], ey = b[1] - a[1];
            const double s = std::clamp(((p.x[0] - a[0]) * ex + (p.x[1] - a[1]) * ey) / (ex * ex + ey * ey), 0.0, 1.0);
            const double x = a[0] + s * ex, y = a[1] + s * ey;
            const double d = std::hypot(x - p.x[0], y - p.x[1]) + dt;
            if (d < out.dist) {
                out.dist = d;
                out.foot = ParaPoint(t, {x});
            }
            a = b;
        }
    }
    return out;
}

double surface_measure(const SampledGraph& g, const ParaBall& ball) {
    const ParaGrid& grid = g.grid();
    const double r = ball.radius;
    const ParaPoint c = g.project(ball.center);
    auto clamp_range = [](double lo_frac, double hi_frac, std::size_t count, std::size_t& a, std::size_t& b) {
        a = static_cast<std::size_t>(std::clamp(std::floor(lo_frac), 0.0, static_cast<double>(count)));
        b = static_cast<std::size_t>(std::clamp(std::ceil(hi_frac) + 1.0, 0.0, static_cast<double>(count)));
    };
    std::size_t t0, t1, x0 = 0, x1 = 1;
    clamp_range(grid.t_frac(c.t - r * r), grid.t_frac(c.t + r * r), grid.nt(), t0, t1);
    if (grid.dim() > 0) clamp_range(grid.x_frac(0, c.x[0] - r), grid.x_frac(0, c.x[0] + r), grid.nx(0), x0, x1);
    std::size_t count = 0;
    for (std::size_t it = t0; it < t1; ++it)
        for (std::size_t ix = x0; ix < x1; ++ix)
            if (ball.contains(g.sample_point(grid.index(it, ix)))) ++count;
    return static_cast<double>(count) * grid.cell_volume();
}

AdrReport adr_check(const SampledGraph& g, std::span<const ParaPoint> centers, std::span<const double> radii) {
    AdrReport rep;
    rep.min_ratio = kInf;
    rep.max_ratio = 0.0;
    const Box& box = g.grid().box();
    for (const double r : radii) {
        if (r < 4.0 * g.grid().delta())
            throw ResolutionError("adr_check: radius below 4 * delta");
        for (const ParaPoint& c : centers) {
            const ParaPoint b = g.project(c);
            bool inside = b.t - r * r >= box.t_lo && b.t + r * r <= box.t_hi;
            for (int i = 0; i < box.dim; ++i) inside = inside && b.x[i] - r >= box.lo[i] && b.x[i] + r <= box.hi[i];
            if (!inside) throw OutOfWindowError("adr_check: ball footprint leaves the graph box");
            const double ratio = surface_measure(g, {c, r}) / std::pow(r, g.n() + 1);
            rep.min_ratio = std::min(rep.min_ratio, ratio);
            rep.max_ratio = std::max(rep.max_ratio, ratio);
            ++rep.samples;
        }
    }
    return rep;
}

// ---- fixtures ----------------------------------------------------------------

Box base_box(int n, double t_lo, double t_hi, double x_lo, double x_hi) {
    Box b;
    b.dim = n - 1;
    b.t_lo = t_lo;
    b.t_hi = t_hi;
    if (n == 2) {
        b.lo[0] = x_lo;
        b.hi[0] = x_hi;
    }
    return b;
}

SampledGraph make_graph(const GraphSpec& spec) {
    if (spec.n < 1 || spec.n > 2) throw DimensionError("graph spec: n must be 1 or 2");
    if (spec.box.dim != spec.n - 1) throw DimensionError("graph spec: box must have n - 1 spatial axes");
    const ParaGrid grid(spec.box, spec.delta);
    const int n = spec.n;
    auto xprime = [n](const ParaPoint& b) { return n == 2 ? b.x[0] : 0.0; };
    ScalarField f;
    if (spec.kind == "flat") {
        const double h = spec.height;
        f = ScalarField::sample(grid, [h](const ParaPoint&) { return h; });
    } else if (spec.kind == "sine") {
        const double ax = n == 2 ? spec.amp_x : 0.0, kx = spec.k_x, at = spec.amp_t, kt = spec.k_t;
        f = ScalarField::sample(grid, [=](const ParaPoint& b) {
            return ax * std::sin(kx * xprime(b)) + at * std::sin(kt * b.t);
        });
    } else if (spec.kind == "multiscale") {
        const double ax = n == 2 ? spec.amp_x : 0.0, kx = spec.k_x, at = spec.amp_t, kt = spec.k_t;
        const int levels = spec.levels;
        f = ScalarField::sample(grid, [=](const ParaPoint& b) {
            double v = 0.0;
            for (int j = 0; j < levels; ++j) {
                const double s = std::ldexp(1.0, j);
                v += ax / s * std::sin(s * kx * xprime(b) + 0.7 * j) + at / s * std::sin(s * s * kt * b.t + 1.3 * j);
            }
            return v;
        });
    } else if (spec.kind == "table") {
        if (spec.table.size() != grid.size())
            throw ConfigError("graph spec: table has " + std::to_string(spec.table.size()) + " values, grid needs " +
                              std::to_string(grid.size()));
        f = ScalarField(grid, spec.table);
    } else {
        throw ConfigError("graph spec: unknown kind '" + spec.kind + "'");
    }
    const double b1 = lip_half_one(f);
    return SampledGraph(n, std::move(f), b1, spec.b2, spec.kind);
}

}  // namespace pcme
