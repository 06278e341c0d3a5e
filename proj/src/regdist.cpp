#include "pcme/regdist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pcme/corona.hpp"
#include "pcme/error.hpp"
#include "pcme/parallel.hpp"
#include "pcme/whitney.hpp"

namespace pcme {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double cube_diam(int dim, double side) { return (std::sqrt(static_cast<double>(dim)) + 1.0) * side; }

// Closed index interval of samples along one axis inside [lo_frac, hi_frac].
bool axis_span(double lo_frac, double hi_frac, std::size_t count, std::size_t& first, std::size_t& last) {
    const double a = std::max(0.0, std::ceil(lo_frac - 1e-9));
    const double b = std::min(static_cast<double>(count) - 1.0, std::floor(hi_frac + 1e-9));
    if (a > b) return false;
    first = static_cast<std::size_t>(a);
    last = static_cast<std::size_t>(b);
    return true;
}

// Samples of the grid inside a closed box, as an index rectangle.
bool samples_in(const ParaGrid& g, const Box& b, IndexRange& r) {
    std::size_t t0, t1, x0 = 0, x1 = 0;
    if (!axis_span(g.t_frac(b.t_lo), g.t_frac(b.t_hi), g.nt(), t0, t1)) return false;
    if (g.dim() == 1 && !axis_span(g.x_frac(0, b.lo[0]), g.x_frac(0, b.hi[0]), g.nx(0), x0, x1)) return false;
    r = {t0, t1 + 1, x0, x1 + 1};
    return true;
}

bool box_inside(const Box& inner, const Box& outer) {
    const double eps = 1e-12;
    if (inner.t_lo < outer.t_lo - eps || inner.t_hi > outer.t_hi + eps) return false;
    for (int i = 0; i < inner.dim; ++i)
        if (inner.lo[i] < outer.lo[i] - eps || inner.hi[i] > outer.hi[i] + eps) return false;
    return true;
}

bool aligned(double value, double step) {
    const double q = value / step;
    return std::abs(q - std::round(q)) <= 1e-9 * std::max(1.0, std::abs(q));
}

double auto_root_side(const Box& d, double min_side) {
    double limit = std::sqrt(d.t_hi - d.t_lo);
    for (int i = 0; i < d.dim; ++i) limit = std::min(limit, d.hi[i] - d.lo[i]);
    for (double s = std::exp2(std::floor(std::log2(limit))); s >= min_side; s *= 0.5) {
        bool ok = aligned(d.t_lo, s * s) && aligned(d.t_hi, s * s);
        for (int i = 0; i < d.dim; ++i) ok = ok && aligned(d.lo[i], s) && aligned(d.hi[i], s);
        if (ok) return s;
    }
    throw ParameterError("whitney wrt h: domain is not a union of dyadic boxes above the minimal side");
}

struct Collected {
    std::vector<HCube> cubes;
    std::vector<Box> unresolved;
    bool root_accepted = false;
};

void subdivide(const HSource& h, const Box& box, double side, double min_side, int depth, Collected& out) {
    const int dim = box.dim;
    const double diam = cube_diam(dim, side);
    if (20.0 * diam <= h.box_inf(box)) {
        if (depth == 0) out.root_accepted = true;
        out.cubes.push_back({box, side, diam});
        return;
    }
    const double hs = 0.5 * side;
    if (hs < min_side) {
        out.unresolved.push_back(box);
        return;
    }
    const double qt = 0.25 * (box.t_hi - box.t_lo);
    for (int a = 0; a < 4; ++a)
        for (int m = 0; m < (1 << dim); ++m) {
            Box c = box;
            c.t_lo = box.t_lo + a * qt;
            c.t_hi = c.t_lo + qt;
            for (int i = 0; i < dim; ++i) {
                const bool upper = (m >> i) & 1;
                c.lo[i] = upper ? box.lo[i] + hs : box.lo[i];
                c.hi[i] = c.lo[i] + hs;
            }
            subdivide(h, c, hs, min_side, depth + 1, out);
        }
}

}  // namespace

// ---- sources ----------------------------------------------------------------

HSource h_constant(const ParaGrid& grid, double c) {
    return {ScalarField::sample(grid, [c](const ParaPoint&) { return c; }), [c](const Box&) { return c; },
            "constant"};
}

HSource h_distance_to(const ParaGrid& grid, const ParaPoint& origin) {
    if (origin.dim != grid.dim()) throw DimensionError("h: origin must be a base point");
    return {ScalarField::sample(grid, [origin](const ParaPoint& p) { return para_dist(origin, p); }),
            [origin](const Box& b) { return para_dist(origin, b); }, "distance"};
}

HSource h_interpolated(ScalarField samples, std::string label) {
    ScalarField plain(samples.grid(), samples.shared_values());
    auto box_inf = [plain](const Box& b) {
        const ParaGrid& g = plain.grid();
        std::vector<double> ts{b.t_lo, b.t_hi}, xs;
        std::size_t a, z;
        if (axis_span(g.t_frac(b.t_lo), g.t_frac(b.t_hi), g.nt(), a, z))
            for (std::size_t i = a; i <= z; ++i) ts.push_back(g.t_at(i));
        if (g.dim() == 1) {
            xs = {b.lo[0], b.hi[0]};
            if (axis_span(g.x_frac(0, b.lo[0]), g.x_frac(0, b.hi[0]), g.nx(0), a, z))
                for (std::size_t i = a; i <= z; ++i) xs.push_back(g.x_at(0, i));
        }
        double m = kInf;
        ParaPoint p;
        p.dim = g.dim();
        for (double t : ts) {
            p.t = t;
            if (g.dim() == 0) {
                m = std::min(m, plain.interpolate(p));
                continue;
            }
            for (double x : xs) {
                p.x[0] = x;
                m = std::min(m, plain.interpolate(p));
            }
        }
        return m;
    };
    return {std::move(plain), std::move(box_inf), std::move(label)};
}

HSource h_half_stopping_distance(const StoppingDistance& d, const SampledGraph& graph, const ParaGrid& grid) {
    if (grid.dim() != graph.grid().dim()) throw DimensionError("h: grid must live on the graph base");
    std::vector<double> v(grid.size());
    parallel_for(grid.size(), [&](std::size_t i) { v[i] = 0.5 * d(graph.lift(grid.point(i))); });
    return h_interpolated(ScalarField(grid, std::move(v)), "half stopping distance");
}

// ---- decomposition ------------------------------------------------------------

WhitneyH whitney_wrt_h(const HSource& h, const WhitneyHOptions& opt) {
    const ParaGrid& grid = h.field.grid();
    const Box& domain = grid.box();
    const int dim = domain.dim;
    if (dim > 1) throw DimensionError("whitney wrt h: base dimension at most 2");
    for (double v : h.field.values())
        if (!(v >= 0.0)) throw ParameterError("whitney wrt h: h is negative");
    WhitneyH w;
    w.h = h;
    w.lip = lip_half_one(h.field);
    if (w.lip > 1.0 + 1e-9)
        throw ParameterError("whitney wrt h: Lip(1/2,1) constant of h is " + std::to_string(w.lip) + " > 1");

    const double min_side = opt.min_side > 0.0 ? opt.min_side : grid.delta() / 64.0;
    const double s0 = opt.root_side > 0.0 ? opt.root_side : auto_root_side(domain, min_side);
    const double T = domain.t_hi - domain.t_lo;
    const auto nt = static_cast<std::size_t>(std::llround(T / (s0 * s0)));
    const auto nx = dim == 1 ? static_cast<std::size_t>(std::llround((domain.hi[0] - domain.lo[0]) / s0)) : 1;
    if (nt == 0 || nx == 0 || std::abs(static_cast<double>(nt) * s0 * s0 - T) > 1e-9 * T)
        throw ParameterError("whitney wrt h: root side does not tile the domain");

    std::vector<Box> roots;
    for (std::size_t a = 0; a < nt; ++a)
        for (std::size_t b = 0; b < nx; ++b) {
            Box r = domain;
            r.t_lo = domain.t_lo + static_cast<double>(a) * s0 * s0;
            r.t_hi = r.t_lo + s0 * s0;
            if (dim == 1) {
                r.lo[0] = domain.lo[0] + static_cast<double>(b) * s0;
                r.hi[0] = r.lo[0] + s0;
            }
            roots.push_back(r);
        }
    std::vector<Collected> parts(roots.size());
    parallel_for(roots.size(), [&](std::size_t i) { subdivide(h, roots[i], s0, min_side, 0, parts[i]); });
    for (Collected& c : parts) {
        if (c.root_accepted)
            throw ResolutionError("whitney wrt h: a root box already satisfies the criterion, so maximality is not decided inside the domain");
        w.cubes.insert(w.cubes.end(), c.cubes.begin(), c.cubes.end());
        w.unresolved.insert(w.unresolved.end(), c.unresolved.begin(), c.unresolved.end());
    }
    if (w.cubes.empty()) throw ResolutionError("whitney wrt h: no cube resolved");

    // all J with 10J containing a point have sides within a factor 6 and lie
    // in a box of spatial side 66 s_min and time side 3636 s_min^2
    w.overlap_bound = 3636.0 * std::pow(66.0, dim);
    if (!opt.check) return w;

    std::vector<int> count(grid.size(), 0);
    w.min_ratio = kInf;
    w.max_ratio = 0.0;
    for (const HCube& c : w.cubes) {
        IndexRange r;
        if (!samples_in(grid, dilate_box(c.box, 10.0), r)) continue;
        for (std::size_t it = r.t0; it < r.t1; ++it)
            for (std::size_t ix = r.x0; ix < r.x1; ++ix) {
                const std::size_t i = grid.index(it, ix);
                const double ratio = h.field[i] / c.diam;
                w.min_ratio = std::min(w.min_ratio, ratio);
                w.max_ratio = std::max(w.max_ratio, ratio);
                ++count[i];
            }
    }
    if (w.min_ratio < 10.0 * (1.0 - 1e-12) || w.max_ratio > 60.0 * (1.0 + 1e-12))
        throw AssertionFailure("whitney wrt h: h / diam on 10I ranges over [" + std::to_string(w.min_ratio) + ", " +
                               std::to_string(w.max_ratio) + "], outside [10, 60]");
    w.overlap = static_cast<std::size_t>(*std::max_element(count.begin(), count.end()));
    if (static_cast<double>(w.overlap) > w.overlap_bound)
        throw AssertionFailure("whitney wrt h: overlap of the 10-dilates exceeds the volume bound");

    // only neighbors of a different side can violate the ratio bound
    std::vector<Box> dilates;
    std::vector<double> sides;
    dilates.reserve(w.cubes.size());
    for (const HCube& c : w.cubes) {
        dilates.push_back(dilate_box(c.box, 10.0));
        sides.push_back(c.side);
    }
    const BoxIndex index(dilates, sides);
    std::vector<double> hi(w.cubes.size(), 1.0);
    std::vector<std::size_t> pairs(w.cubes.size(), 0);
    parallel_for(w.cubes.size(), [&](std::size_t i) {
        std::vector<std::size_t> hits;
        const double s = w.cubes[i].side;
        index.meeting_outside(dilates[i], s, s, hits);
        for (std::size_t j : hits) {
            const double ratio = w.cubes[i].diam / w.cubes[j].diam;
            hi[i] = std::max({hi[i], ratio, 1.0 / ratio});
            if (j > i) ++pairs[i];
        }
    });
    w.max_neighbor_ratio = 1.0;
    for (std::size_t i = 0; i < w.cubes.size(); ++i) {
        w.max_neighbor_ratio = std::max(w.max_neighbor_ratio, hi[i]);
        w.pairs += pairs[i];
    }
    w.min_neighbor_ratio = 1.0 / w.max_neighbor_ratio;
    if (w.min_neighbor_ratio < 1.0 / 6.0 - 1e-12 || w.max_neighbor_ratio > 6.0 + 1e-12)
        throw AssertionFailure("whitney wrt h: neighbor diameter ratio " + std::to_string(w.max_neighbor_ratio) +
                               " exceeds 6");
    return w;
}

// ---- bumps and H ----------------------------------------------------------------

ProfileValue transition_profile(double s) {
    if (s <= 0.0) return {1.0, 0.0, 0.0};
    if (s >= 1.0) return {0.0, 0.0, 0.0};
    // psi = sigma(g), sigma(z) = 1 / (1 + e^z), g = 1/(1-s) - 1/s
    const double g = 1.0 / (1.0 - s) - 1.0 / s;
    const double g1 = 1.0 / ((1.0 - s) * (1.0 - s)) + 1.0 / (s * s);
    const double g2 = 2.0 / ((1.0 - s) * (1.0 - s) * (1.0 - s)) - 2.0 / (s * s * s);
    const double sig = g > 0.0 ? std::exp(-g) / (1.0 + std::exp(-g)) : 1.0 / (1.0 + std::exp(g));
    const double s1 = -sig * (1.0 - sig);
    const double s2 = -s1 * (1.0 - 2.0 * sig);
    return {sig, s1 * g1, s2 * g1 * g1 + s1 * g2};
}

double transition_slope() {
    static const double slope = [] {
        double m = 0.0;
        for (int i = 1; i < 20000; ++i) m = std::max(m, std::abs(transition_profile(i / 20000.0).d1));
        return m;
    }();
    return slope;
}

HField::HField(WhitneyH w) : w_(std::make_shared<const WhitneyH>(std::move(w))) {
    std::vector<Box> support, cells;
    support.reserve(w_->cubes.size());
    cells.reserve(w_->cubes.size());
    for (const HCube& c : w_->cubes) {
        support.push_back(dilate_box(c.box, 3.0));
        cells.push_back(c.box);
    }
    support_ = BoxIndex(std::move(support));
    cells_ = BoxIndex(std::move(cells));
    unresolved_ = BoxIndex(w_->unresolved);
}

std::size_t HField::active(const ParaPoint& p, std::vector<std::size_t>& out) const {
    support_.containing(p, out);
    return out.size();
}

HDerivs HField::sum(const ParaPoint& p, bool derivatives) const {
    std::vector<std::size_t> hits;
    active(p, hits);
    HDerivs out;
    for (std::size_t i : hits) {
        const HCube& c = w_->cubes[i];
        const ParaPoint ctr = c.box.center();
        // time: 1 on 2I (half width 4b), 0 off 3I (9b)
        const double b = 0.5 * c.side * c.side;
        const double dt = p.t - ctr.t;
        const ProfileValue T = transition_profile((std::abs(dt) / b - 4.0) / 5.0);
        const double tsign = dt < 0.0 ? -1.0 : 1.0;
        const double T1 = T.d1 * tsign / (5.0 * b), T2 = T.d2 / (25.0 * b * b);
        ProfileValue X{1.0, 0.0, 0.0};
        double X1 = 0.0, X2 = 0.0;
        if (p.dim == 1) {
            const double a = 0.5 * c.side;
            const double dx = p.x[0] - ctr.x[0];
            X = transition_profile(std::abs(dx) / a - 2.0);
            X1 = X.d1 * (dx < 0.0 ? -1.0 : 1.0) / a;
            X2 = X.d2 / (a * a);
        }
        out.value += c.diam * T.v * X.v;
        if (!derivatives) continue;
        out.dt += c.diam * T1 * X.v;
        out.dtt += c.diam * T2 * X.v;
        out.dx += c.diam * T.v * X1;
        out.dxx += c.diam * T.v * X2;
    }
    return out;
}

double HField::eval(const ParaPoint& p) const { return sum(p, false).value; }

HDerivs HField::derivs(const ParaPoint& p) const {
    if (w_->h(p) <= 0.0) throw ParameterError("H derivatives: the point lies in the zero set of h");
    std::vector<std::size_t> hits;
    unresolved_.containing(p, hits);
    if (!hits.empty()) throw ResolutionError("H derivatives: the point lies in an unresolved box");
    return sum(p, true);
}

bool HField::interior(const ParaPoint& p) const {
    std::vector<std::size_t> hits;
    cells_.containing(p, hits);
    if (hits.empty()) return false;
    // a cube J with p in 3J has side at most 6 s(I), so J lies within 25
    // spatial and 361 temporal half-widths of I
    for (std::size_t i : hits) {
        Box reach = dilate_box(w_->cubes[i].box, 25.0);
        const Box in_time = dilate_box(w_->cubes[i].box, 19.0);
        reach.t_lo = in_time.t_lo;
        reach.t_hi = in_time.t_hi;
        if (!box_inside(reach, w_->domain())) return false;
    }
    return true;
}

double HField::bump_lip() const {
    const double m = transition_slope();
    // spatial slope 2M / s, time slope 2M / (5 s^2) giving a half-order
    // constant sqrt(2M / 5) / s
    const int dim = base_dim();
    const double per_side = dim == 0 ? std::sqrt(0.4 * m) : std::max(2.0 * m, std::sqrt(0.4 * m));
    return cube_diam(dim, 1.0) * per_side;
}

ScalarField HField::sample() const {
    const ParaGrid& g = w_->h.field.grid();
    std::vector<double> v(g.size());
    parallel_for(g.size(), [&](std::size_t i) { v[i] = eval(g.point(i)); });
    return ScalarField(g, std::move(v));
}

HField build_H(WhitneyH w) { return HField(std::move(w)); }

HDerivs eval_H_derivs(const HField& field, const ParaPoint& p) { return field.derivs(p); }

RegdistReport verify_regdist_props(const HField& field, int sweep) {
    if (sweep < 1) throw ParameterError("regdist: sweep density must be positive");
    const WhitneyH& w = field.whitney();
    const ParaGrid& g = w.h.field.grid();
    RegdistReport rep;
    rep.upper_bound = 0.6 * static_cast<double>(w.overlap);
    rep.lip_bound = 2.0 * field.bump_lip() * static_cast<double>(w.overlap);

    struct Local {
        double lo = kInf, hi = 0.0, d1 = 0.0, d2 = 0.0, lip = 0.0, zero = 0.0;
        std::size_t used = 0, zeros = 0, excluded = 0;
        void merge(const Local& o) {
            lo = std::min(lo, o.lo);
            hi = std::max(hi, o.hi);
            d1 = std::max(d1, o.d1);
            d2 = std::max(d2, o.d2);
            lip = std::max(lip, o.lip);
            zero = std::max(zero, o.zero);
            used += o.used;
            zeros += o.zeros;
            excluded += o.excluded;
        }
    };

    // grid samples: comparability and the zero set
    std::vector<Local> at_samples(g.size());
    parallel_for(g.size(), [&](std::size_t i) {
        Local& l = at_samples[i];
        const ParaPoint p = g.point(i);
        const double h = w.h.field[i];
        if (h <= 0.0) {
            ++l.zeros;
            l.zero = field.eval(p);
        } else if (!field.interior(p)) {
            ++l.excluded;
        } else {
            const double r = field.eval(p) / h;
            l.lo = l.hi = r;
            ++l.used;
        }
    });

    // a sweep of sweep^{n} points inside every interior cube, resolving the
    // bumps independently of the grid; derivative bounds and local
    // Lip(1/2,1) quotients over dyadic offsets from the cube side
    std::vector<Local> at_cubes(w.cubes.size());
    parallel_for(w.cubes.size(), [&](std::size_t c) {
        const HCube& cube = w.cubes[c];
        Local& l = at_cubes[c];
        if (!field.interior(cube.box.center())) return;
        const int dim = cube.box.dim;
        const int nx = dim == 1 ? sweep : 1;
        const double len = cube.box.t_hi - cube.box.t_lo;
        for (int a = 0; a < sweep; ++a)
            for (int b = 0; b < nx; ++b) {
                ParaPoint p = cube.box.center();
                p.t = cube.box.t_lo + (a + 0.5) * len / sweep;
                if (dim == 1) p.x[0] = cube.box.lo[0] + (b + 0.5) * cube.side / sweep;
                const double h = w.h(p);
                const HDerivs d = field.derivs(p);
                const double r = d.value / h;
                l.lo = std::min(l.lo, r);
                l.hi = std::max(l.hi, r);
                l.d1 = std::max(l.d1, h * std::abs(d.dt) + std::abs(d.dx));
                l.d2 = std::max(l.d2, h * h * h * std::abs(d.dtt) + h * std::abs(d.dxx));
                for (int j = 0; j < 8; ++j) {
                    const double f = std::ldexp(1.0, j) / 16.0;
                    for (int sign : {-1, 1}) {
                        ParaPoint q = p;
                        q.t += sign * f * len;
                        l.lip = std::max(l.lip, std::abs(field.eval(q) - d.value) / para_dist(p, q));
                        if (dim == 1) {
                            q = p;
                            q.x[0] += sign * f * cube.side;
                            l.lip = std::max(l.lip, std::abs(field.eval(q) - d.value) / para_dist(p, q));
                        }
                    }
                }
                ++l.used;
            }
    });

    Local total, swept;
    for (const Local& l : at_samples) total.merge(l);
    for (const Local& l : at_cubes) swept.merge(l);
    rep.samples = total.used;
    rep.zero = total.zeros;
    rep.excluded = total.excluded;
    rep.swept = swept.used;
    if (swept.used == 0) throw ResolutionError("regdist: no interior cube to sweep");
    rep.c1 = std::min(total.lo, swept.lo);
    rep.c2 = std::max(total.hi, swept.hi);
    rep.deriv1 = swept.d1;
    rep.deriv2 = swept.d2;
    rep.lip = std::max(swept.lip, lip_half_one(field.sample()));
    rep.bounds_ok = total.zero == 0.0 && rep.c1 >= (1.0 / 60.0) * (1.0 - 1e-12) && rep.c2 <= rep.upper_bound * (1.0 + 1e-12);
    if (!rep.bounds_ok)
        throw AssertionFailure("regdist: H / h ranges over [" + std::to_string(rep.c1) + ", " + std::to_string(rep.c2) +
                               "], outside [1/60, (3/5) N = " + std::to_string(rep.upper_bound) + "]" +
                               (total.zero > 0.0 ? ", and H is positive on Z" : ""));
    return rep;
}

nlohmann::json to_json(const RegdistReport& r) {
    return {{"c1", r.c1},         {"c2", r.c2},           {"upper_bound", r.upper_bound},
            {"c_n1", r.deriv1},   {"c_n2", r.deriv2},     {"c3", r.lip},
            {"lip_bound", r.lip_bound}, {"c4", r.pbmo},   {"samples", r.samples},
            {"zero", r.zero},     {"excluded", r.excluded}, {"swept", r.swept},
            {"bounds_ok", r.bounds_ok}};
}

nlohmann::json to_json(const WhitneyH& w) {
    nlohmann::json cubes = nlohmann::json::array();
    for (const HCube& c : w.cubes) {
        nlohmann::json lo = {c.box.t_lo}, hi = {c.box.t_hi};
        for (int i = 0; i < c.box.dim; ++i) {
            lo.push_back(c.box.lo[i]);
            hi.push_back(c.box.hi[i]);
        }
        cubes.push_back({{"lo", lo}, {"hi", hi}, {"diam", c.diam}});
    }
    return {{"h", w.h.label},
            {"cubes", std::move(cubes)},
            {"unresolved", w.unresolved.size()},
            {"lip_h", w.lip},
            {"N", w.overlap},
            {"N_bound", w.overlap_bound},
            {"h_over_diam", {w.min_ratio, w.max_ratio}},
            {"neighbor_ratio", {w.min_neighbor_ratio, w.max_neighbor_ratio}},
            {"pairs", w.pairs}};
}

}  // namespace pcme
