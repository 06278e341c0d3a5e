#include "pcme/lift.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "pcme/boxindex.hpp"
#include "pcme/error.hpp"
#include "pcme/halfderiv.hpp"
#include "pcme/parallel.hpp"

namespace pcme {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kWide = 1e9;  // margin for distance queries near the graph box edges

std::string point_str(const ParaPoint& p) {
    std::ostringstream s;
    s.precision(10);
    s << "(t=" << p.t;
    for (int i = 0; i < p.dim; ++i) s << ", x" << i + 1 << "=" << p.x[static_cast<std::size_t>(i)];
    s << ")";
    return s.str();
}

// Splits a point of R^{n+1} into its base (t, x') and height x_n.
double height(const ParaPoint& p) { return p.x[static_cast<std::size_t>(p.dim - 1)]; }

ParaPoint with_height(const ParaPoint& base, double xn) {
    ParaPoint p = base;
    p.x[static_cast<std::size_t>(base.dim)] = xn;
    p.dim = base.dim + 1;
    return p;
}

SampledGraph graph_from(const SampledGraph& like, std::vector<double> values, std::string label) {
    ScalarField field(like.grid(), std::move(values));
    const double b1 = lip_half_one(field);
    return SampledGraph(like.n(), std::move(field), b1, like.b2(), std::move(label));
}

// Center plus corners, pulled slightly inside, of a Whitney cube.
std::vector<ParaPoint> probe_points(const Box& b) {
    const ParaPoint c = b.center();
    std::vector<ParaPoint> out{c};
    const int corners = 1 << (b.dim + 1);
    const double pull = 1e-9;
    for (int m = 0; m < corners; ++m) {
        ParaPoint p = c;
        p.t = (m & 1) ? b.t_hi : b.t_lo;
        for (int i = 0; i < b.dim; ++i) {
            const auto k = static_cast<std::size_t>(i);
            p.x[k] = ((m >> (i + 1)) & 1) ? b.hi[k] : b.lo[k];
        }
        p.t += pull * (c.t - p.t);
        for (int i = 0; i < b.dim; ++i) {
            const auto k = static_cast<std::size_t>(i);
            p.x[k] += pull * (c.x[k] - p.x[k]);
        }
        out.push_back(p);
    }
    return out;
}

// Lattice of points of the open ball, `per` steps per radius in space and
// per^2 in time.
std::vector<ParaPoint> ball_lattice(const ParaBall& ball, int per) {
    const double r = ball.radius;
    const double hx = r / per, ht = r * r / (static_cast<double>(per) * per);
    const int dim = ball.center.dim;
    std::vector<ParaPoint> out;
    const int nt = per * per;
    for (int a = -nt; a <= nt; ++a) {
        const int n1 = dim >= 1 ? per : 0, n2 = dim >= 2 ? per : 0;
        for (int b = -n1; b <= n1; ++b)
            for (int c = -n2; c <= n2; ++c) {
                ParaPoint p = ball.center;
                p.t += a * ht;
                if (dim >= 1) p.x[0] += b * hx;
                if (dim >= 2) p.x[1] += c * hx;
                if (ball.contains(p)) out.push_back(p);
            }
    }
    return out;
}

struct Extreme {
    double value;
    ParaPoint where;
    bool set = false;

    void low(double v, const ParaPoint& p) {
        if (!set || v < value) value = v, where = p, set = true;
    }
    void high(double v, const ParaPoint& p) {
        if (!set || v > value) value = v, where = p, set = true;
    }
};

Check make_check(std::string name, bool pass, double value, double bound, std::size_t samples, const Extreme& e) {
    Check c{std::move(name), pass, value, bound, samples, 0, {}};
    if (e.set) c.witness = point_str(e.where);
    return c;
}

Box default_domain(const RegimeLift& ctx) {
    const Cube& qs = ctx.tree().cube(ctx.maximal());
    const double D = qs.diam;
    const double K = ctx.K();
    const double reach = std::max(std::pow(K, 0.25) + 2.0, K / 32.0 + 1.0) * D;
    const double s0 = std::exp2(std::floor(std::log2(D)));
    const ParaPoint& c = qs.center;
    const Box& gb = ctx.tree().graph().grid().box();
    const int n = ctx.tree().graph().n();
    // whole root tiles on each side of the cube center, kept inside the graph box along the base
    auto steps = [](double want, double room, double side) {
        return std::min(std::ceil(want / side), std::floor(room / side + 1e-9));
    };
    Box d;
    d.dim = n;
    const double ts = s0 * s0;
    d.t_lo = c.t - steps(reach * reach, c.t - gb.t_lo, ts) * ts;
    d.t_hi = c.t + steps(reach * reach, gb.t_hi - c.t, ts) * ts;
    for (int i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        const bool base = i < n - 1;
        d.lo[k] = c.x[k] - steps(reach, base ? c.x[k] - gb.lo[k] : kWide, s0) * s0;
        d.hi[k] = c.x[k] + steps(reach, base ? gb.hi[k] - c.x[k] : kWide, s0) * s0;
    }
    if (!(d.t_hi > d.t_lo)) throw ParameterError("lift: maximal cube too close to the time edge of the graph box");
    return d;
}

}  // namespace

RegimeLift::RegimeLift(std::shared_ptr<const CubeTree> tree, const Regime& regime, double eta)
    : tree_(std::move(tree)), f_(regime.graph), eta_(eta) {
    if (!(eta > 0.0 && eta < 1.0) || std::pow(eta, 7.0 / 8.0) > 0.5)
        throw ParameterError("lift: eta must satisfy eta^{7/8} <= 1/2");
    if (f_.n() != tree_->graph().n()) throw DimensionError("lift: regime graph and E differ in dimension");
    d_ = std::make_shared<const StoppingDistance>(tree_, regime.cubes);
    const ParaGrid& grid = f_.grid();
    std::vector<double> v(grid.size());
    parallel_for(grid.size(), [&](std::size_t i) { v[i] = (*d_)(f_.lift(grid.point(i))); });
    dF_ = ScalarField(grid, std::move(v));
}

LiftedGraph lift_graph(const RegimeLift& ctx, double alpha, int sign) {
    if (alpha < 7.0 / 8.0 - 1e-12 || alpha > 31.0 / 32.0 + 1e-12)
        throw ParameterError("lift: alpha must lie in [7/8, 31/32]");
    if (sign != 1 && sign != -1) throw ParameterError("lift: sign must be +1 or -1");
    const SampledGraph& f = ctx.f();
    const double lift = std::pow(ctx.eta(), alpha);
    const std::size_t size = f.grid().size();
    std::vector<double> v(size);
    for (std::size_t i = 0; i < size; ++i) v[i] = f.field()[i] + sign * lift * ctx.dF()[i];

    LiftedGraph out{graph_from(f, std::move(v), sign > 0 ? "g+" : "g-"), alpha, sign, false};
    out.lip = out.graph.b1();
    out.lip_bound = 3.0 * lift;
    if (f.b1() <= ctx.eta() * (1.0 + 1e-9) && out.lip > out.lip_bound * (1.0 + 1e-9)) {
        std::ostringstream s;
        s << "lift: sampled Lip(1/2,1) constant " << out.lip << " of g exceeds 3 eta^alpha = " << out.lip_bound;
        throw AssertionFailure(s.str());
    }

    std::vector<double> ratio(size, 1.0);
    parallel_for(size, [&](std::size_t i) {
        const double dF = ctx.dF()[i];
        const double dG = ctx.d()(out.graph.sample_point(i));
        ratio[i] = dF > 0.0 ? dG / dF : (dG == 0.0 ? 1.0 : kInf);
    });
    out.min_dG_ratio = *std::min_element(ratio.begin(), ratio.end());
    out.max_dG_ratio = *std::max_element(ratio.begin(), ratio.end());
    for (std::size_t i = 0; i < size; ++i)
        if (ratio[i] < 0.5 * (1.0 - 1e-12) || ratio[i] > 2.0 * (1.0 + 1e-12))
            throw AssertionFailure("lift: d[G] / d[F] = " + std::to_string(ratio[i]) + " outside [1/2, 2] at " +
                                   point_str(f.grid().point(i)));
    return out;
}

void require_sandwich(const SandwichReport& r) {
    if (!r.holds) throw AssertionFailure("psi sandwich: " + r.failure + " at " + point_str(r.witness));
}

PsiPair build_psi(const RegimeLift& ctx, const PsiOptions& opt) {
    const SampledGraph& f = ctx.f();
    const ParaGrid& grid = f.grid();
    const std::size_t size = grid.size();
    std::vector<double> h(size);
    for (std::size_t i = 0; i < size; ++i) h[i] = 0.5 * ctx.dF()[i];
    auto H = std::make_shared<const HField>(whitney_wrt_h(h_interpolated(ScalarField(grid, h), "half stopping distance")));
    ScalarField Hs = H->sample();
    std::vector<char> interior(size);
    parallel_for(size, [&](std::size_t i) { interior[i] = H->interior(grid.point(i)) ? 1 : 0; });

    const double eta = ctx.eta();
    const double lift = std::pow(eta, 15.0 / 16.0);
    std::vector<double> plus(size), minus(size);
    for (std::size_t i = 0; i < size; ++i) {
        plus[i] = f.field()[i] + lift * Hs[i];
        minus[i] = f.field()[i] - lift * Hs[i];
    }
    const double c3 = 2.0 * H->bump_lip() * static_cast<double>(H->whitney().overlap);
    auto make = [&](std::vector<double> v, int sign) {
        LiftedGraph g{graph_from(f, std::move(v), sign > 0 ? "psi+" : "psi-"), 15.0 / 16.0, sign, true};
        g.lip = g.graph.b1();
        g.lip_bound = f.b1() + lift * c3;
        return g;
    };
    PsiPair out{make(std::move(plus), 1), make(std::move(minus), -1), H, Hs, {}};

    // (g_{7/8} - psi^+) / (eta^{7/8} d) = 1 - eta^{1/16} H / d and
    // (psi^+ - g_{31/32}) / (eta^{31/32} d) = eta^{-1/32} H / d - 1; the
    // minus side mirrors both.
    SandwichReport& sw = out.sandwich;
    sw.min_upper = kInf;
    sw.min_lower = kInf;
    out.c1 = kInf;
    out.c2 = 0.0;
    double worst = kInf;
    Box win{};
    win.dim = grid.dim();
    bool any = false;
    for (std::size_t i = 0; i < size; ++i) {
        const double d = ctx.dF()[i];
        if (!interior[i] || !(d > 0.0)) {
            ++sw.excluded;
            continue;
        }
        ++sw.samples;
        const double ratio = Hs[i] / d;
        out.c1 = std::min(out.c1, 2.0 * ratio);
        out.c2 = std::max(out.c2, 2.0 * ratio);
        const double up = 1.0 - std::pow(eta, 1.0 / 16.0) * ratio;
        const double lo = std::pow(eta, -1.0 / 32.0) * ratio - 1.0;
        sw.min_upper = std::min(sw.min_upper, up);
        sw.min_lower = std::min(sw.min_lower, lo);
        const ParaPoint p = grid.point(i);
        if (std::min(up, lo) < worst) {
            worst = std::min(up, lo);
            sw.witness = p;
            sw.failure = up < lo ? "psi+ above g_{7/8} (psi- below g-_{7/8})"
                                 : "psi+ below g_{31/32} (psi- above g-_{31/32})";
        }
        if (!any) {
            win.t_lo = win.t_hi = p.t;
            win.lo = win.hi = p.x;
            any = true;
        }
        win.t_lo = std::min(win.t_lo, p.t);
        win.t_hi = std::max(win.t_hi, p.t);
        for (int k = 0; k < win.dim; ++k) {
            win.lo[k] = std::min(win.lo[k], p.x[k]);
            win.hi[k] = std::max(win.hi[k], p.x[k]);
        }
    }
    if (sw.samples == 0) throw ResolutionError("psi: no sample where H is complete");
    sw.holds = worst >= -1e-12;
    if (sw.holds) sw.failure.clear();
    if (opt.assert_sandwich) require_sandwich(sw);

    // widen the sample hull to cell faces
    win.t_lo -= 0.5 * grid.time_step();
    win.t_hi += 0.5 * grid.time_step();
    for (int k = 0; k < win.dim; ++k) {
        win.lo[k] -= 0.5 * grid.delta();
        win.hi[k] += 0.5 * grid.delta();
    }
    const Box bmo_window = opt.pbmo_window.dim < 0 ? win : opt.pbmo_window;
    out.pbmo_f = pbmo_norm(half_time_derivative(f.field(), HalfMethod::spectral), bmo_window);
    out.pbmo_plus = pbmo_norm(half_time_derivative(out.plus.graph.field(), HalfMethod::spectral), bmo_window);
    out.pbmo_minus = pbmo_norm(half_time_derivative(out.minus.graph.field(), HalfMethod::spectral), bmo_window);
    out.pbmo_bound = 1.0 + f.b2();
    return out;
}

std::vector<Check> check_E_below(const RegimeLift& ctx, const LiftedGraph& g, const ParaBall& window) {
    const SampledGraph& E = ctx.tree().graph();
    const double eta = ctx.eta();
    const double lift = std::pow(eta, g.alpha);
    const std::size_t size = E.grid().size();
    std::vector<char> in(size, 0);
    std::vector<double> d(size, 0.0), a(size, 0.0), b(size, 0.0), c(size, 0.0);
    parallel_for(size, [&](std::size_t i) {
        const ParaPoint p = E.sample_point(i);
        if (!window.contains(p)) return;
        in[i] = 1;
        d[i] = ctx.d()(p);
        const ParaPoint base = E.project(p);
        const double gv = g(base);
        a[i] = dist_to_graph(p, g.graph, kWide).dist / (lift * d[i]);
        b[i] = g.sign * (gv - height(p)) / (lift * d[i]);
        c[i] = dist_to_graph(p, ctx.f(), kWide).dist / (eta * d[i]);
    });
    Extreme amin, amax, bmin, cmax;
    std::size_t count = 0;
    for (std::size_t i = 0; i < size; ++i) {
        if (!in[i]) continue;
        ++count;
        const ParaPoint p = E.sample_point(i);
        amin.low(a[i], p);
        amax.high(a[i], p);
        bmin.low(b[i], p);
        cmax.high(c[i], p);
    }
    if (count == 0) throw ResolutionError("E below: no sample of E in the window");
    std::ostringstream tag;
    tag << "[alpha=" << g.alpha << (g.sign > 0 ? ",+]" : ",-]");
    return {
        make_check("E_below.dist_lower" + tag.str(), amin.value >= 0.125 * (1 - 1e-9), amin.value, 0.125, count, amin),
        make_check("E_below.dist_upper" + tag.str(), amax.value <= 3.0 * (1 + 1e-9), amax.value, 3.0, count, amax),
        make_check("E_below.margin" + tag.str(), bmin.value >= 0.25 * (1 - 1e-9), bmin.value, 0.25, count, bmin),
        make_check("E_near_gamma.constant" + tag.str(), std::isfinite(cmax.value), cmax.value, kInf, count, cmax),
    };
}

bool DomainReport::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

const Check* DomainReport::find(const std::string& name) const {
    for (const Check& c : checks)
        if (c.name == name) return &c;
    return nullptr;
}

DomainReport corona_domain_report(const RegimeLift& ctx, const DomainOptions& opt) {
    DomainReport rep;
    const CubeTree& tree = ctx.tree();
    const SampledGraph& E = tree.graph();
    const SampledGraph& f = ctx.f();
    const double eta = ctx.eta(), K = ctx.K();
    const Cube& qs = tree.cube(ctx.maximal());
    const double D = qs.diam;
    const ParaPoint& center = qs.center;

    // lifted graphs and the lemma on g
    std::vector<LiftedGraph> lifted;  // (7/8, +), (7/8, -), (31/32, +), (31/32, -)
    const double alphas[2] = {7.0 / 8.0, 31.0 / 32.0};
    for (int a = 0; a < 2; ++a)
        for (int s = 0; s < 2; ++s) {
            const int sign = s == 0 ? 1 : -1;
            std::ostringstream tag;
            tag << "[alpha=" << alphas[a] << (sign > 0 ? ",+]" : ",-]");
            try {
                lifted.push_back(lift_graph(ctx, alphas[a], sign));
                const LiftedGraph& l = lifted.back();
                rep.checks.push_back({"g.lip" + tag.str(), true, l.lip, l.lip_bound, f.grid().size(), 0, {}});
                rep.checks.push_back({"g.dG_ratio_min" + tag.str(), true, l.min_dG_ratio, 0.5, f.grid().size(), 0, {}});
                rep.checks.push_back({"g.dG_ratio_max" + tag.str(), true, l.max_dG_ratio, 2.0, f.grid().size(), 0, {}});
            } catch (const AssertionFailure& e) {
                rep.checks.push_back({"g" + tag.str(), false, 0.0, 0.0, f.grid().size(), 0, e.what()});
                return rep;
            }
            const ParaBall window{center, 0.25 * K * D};
            for (Check& c : check_E_below(ctx, lifted.back(), window)) rep.checks.push_back(std::move(c));
        }

    // Whitney regions of the regime, split by the regime graph
    const Box domain = opt.whitney_domain.dim < 0 ? default_domain(ctx) : opt.whitney_domain;
    WhitneyOptions wopt = opt.whitney;
    double min_diam = kInf;
    for (int q = 0; q < static_cast<int>(tree.size()); ++q)
        if (ctx.d().contains(q)) min_diam = std::min(min_diam, tree.cube(q).diam);
    if (wopt.root_side <= 0.0) wopt.root_side = std::exp2(std::floor(std::log2(D)));
    if (wopt.min_dist < 0.0) wopt.min_dist = 0.5 * std::pow(eta, 0.25) * min_diam;
    const WhitneyDecomposition w = whitney_decompose(E, domain, wopt);
    rep.whitney_cubes = w.cubes.size();

    std::vector<int> members;
    for (int q = 0; q < static_cast<int>(tree.size()); ++q)
        if (ctx.d().contains(q)) members.push_back(q);
    std::vector<std::size_t> above, below;
    {
        double sep = kInf;
        std::string failure;
        for (int q : members) {
            const WhitneyRegion r = whitney_region(tree, q, eta, K, false, w);
            ++rep.regions;
            try {
                const RegionSplit split = split_region_by_graph(r, tree, w, f);
                if (!r.members.empty()) sep = std::min(sep, split.min_separation);
                above.insert(above.end(), split.above.begin(), split.above.end());
                below.insert(below.end(), split.below.begin(), split.below.end());
            } catch (const AssertionFailure& e) {
                if (failure.empty()) failure = e.what();
            }
        }
        std::sort(above.begin(), above.end());
        above.erase(std::unique(above.begin(), above.end()), above.end());
        std::sort(below.begin(), below.end());
        below.erase(std::unique(below.begin(), below.end()), below.end());
        rep.checks.push_back({"whitney.separation", failure.empty(), failure.empty() ? sep : 0.0, std::sqrt(eta),
                              above.size() + below.size(), 0, failure});
    }

    // U_Q^+ above g_alpha with margin (1/2) dist(I, Gamma), mirrored below
    std::vector<std::size_t> split_cubes = above;
    split_cubes.insert(split_cubes.end(), below.begin(), below.end());
    std::vector<double> cube_gap(split_cubes.size());
    parallel_for(split_cubes.size(), [&](std::size_t i) {
        cube_gap[i] = f.index().box_distance(w.cubes[split_cubes[i]].box, f.index().full_range(), kInf);
    });
    for (int a = 0; a < 2; ++a) {
        Extreme worst;
        std::size_t count = 0;
        for (std::size_t i = 0; i < split_cubes.size(); ++i) {
            const int s = i < above.size() ? 0 : 1;
            const LiftedGraph& g = lifted[static_cast<std::size_t>(2 * a + s)];
            for (const ParaPoint& p : probe_points(w.cubes[split_cubes[i]].box)) {
                const double margin = (s == 0 ? 1.0 : -1.0) * (height(p) - g(f.project(p)));
                worst.low(margin / cube_gap[i], p);
                ++count;
            }
        }
        std::ostringstream name;
        name << "whitney.above_g[alpha=" << alphas[a] << "]";
        rep.checks.push_back(make_check(name.str(), !worst.set || worst.value >= 0.5 * (1 - 1e-9),
                                        worst.set ? worst.value : 0.0, 0.5, count, worst));
    }

    if (!opt.build_psi) return rep;
    const PsiPair psi = build_psi(ctx, PsiOptions{false, Box{0, 0, {}, {}, -1}});
    {
        const SandwichReport& sw = psi.sandwich;
        Check up{"sandwich.upper", sw.min_upper >= -1e-12, sw.min_upper, 0.0, sw.samples, sw.excluded, {}};
        Check lo{"sandwich.lower", sw.min_lower >= -1e-12, sw.min_lower, 0.0, sw.samples, sw.excluded, {}};
        if (!sw.holds) (sw.min_upper < sw.min_lower ? up : lo).witness = point_str(sw.witness);
        rep.checks.push_back(up);
        rep.checks.push_back(lo);
        rep.checks.push_back({"psi.H_over_h_min", true, psi.c1, 0.0, sw.samples, sw.excluded, {}});
        rep.checks.push_back({"psi.H_over_h_max", true, psi.c2, 0.0, sw.samples, sw.excluded, {}});
        for (const LiftedGraph* l : {&psi.plus, &psi.minus})
            rep.checks.push_back({l->sign > 0 ? "psi.lip[+]" : "psi.lip[-]", l->lip <= l->lip_bound * (1 + 1e-9), l->lip,
                                  l->lip_bound, f.grid().size(), 0, {}});
        rep.checks.push_back({"psi.pbmo[+]", psi.pbmo_plus <= psi.pbmo_bound, psi.pbmo_plus, psi.pbmo_bound, 0, 0, {}});
        rep.checks.push_back({"psi.pbmo[-]", psi.pbmo_minus <= psi.pbmo_bound, psi.pbmo_minus, psi.pbmo_bound, 0, 0, {}});
    }
    const LiftedGraph* psis[2] = {&psi.plus, &psi.minus};

    // clauses (1) and (2) on the Whitney regions
    for (int s = 0; s < 2; ++s) {
        const double sign = s == 0 ? 1.0 : -1.0;
        const char* tag = s == 0 ? "[+]" : "[-]";
        Extreme far, gap, cmp_lo, cmp_hi;
        std::size_t count = 0;
        for (std::size_t m : s == 0 ? above : below)
            for (const ParaPoint& p : probe_points(w.cubes[m].box)) {
                ++count;
                far.high(para_dist(center, p) / (std::pow(K, 0.75) * D), p);
                gap.low(sign * (height(p) - (*psis[s])(f.project(p))), p);
                const double de = dist_to_graph(p, E, kWide).dist;
                const double dpsi = dist_to_graph(p, psis[s]->graph, kWide).dist;
                const double ratio = dpsi > 0.0 ? de / dpsi : kInf;
                cmp_lo.low(ratio, p);
                cmp_hi.high(ratio, p);
            }
        rep.checks.push_back(make_check(std::string("clause1.ball") + tag, !far.set || far.value < 1.0,
                                        far.set ? far.value : 0.0, 1.0, count, far));
        rep.checks.push_back(make_check(std::string("clause1.side") + tag, !gap.set || gap.value > 0.0,
                                        gap.set ? gap.value : 0.0, 0.0, count, gap));
        const bool finite = !cmp_lo.set || (cmp_lo.value > 0.0 && std::isfinite(cmp_hi.value));
        rep.checks.push_back(make_check(std::string("clause2.ratio_min") + tag, finite, cmp_lo.set ? cmp_lo.value : 0.0,
                                        0.0, count, cmp_lo));
        rep.checks.push_back(make_check(std::string("clause2.ratio_max") + tag, finite, cmp_hi.set ? cmp_hi.value : 0.0,
                                        kInf, count, cmp_hi));
    }

    // clauses (3) and (4) on a lattice of the ball B(center, (K/32) diam)
    std::vector<Box> boxes;
    boxes.reserve(w.cubes.size());
    for (const WhitneyCube& c : w.cubes) boxes.push_back(c.box);
    const BoxIndex cells(std::move(boxes));
    const std::vector<ParaPoint> lattice = ball_lattice({center, K / 32.0 * D}, opt.lattice);
    for (int s = 0; s < 2; ++s) {
        const double sign = s == 0 ? 1.0 : -1.0;
        const char* tag = s == 0 ? "[+]" : "[-]";
        const LiftedGraph& up = *psis[s];
        const double tol = up.graph.sampling_radius() + E.sampling_radius();
        std::vector<ParaPoint> pts;
        for (const ParaPoint& p : lattice)
            if (sign * (height(p) - up(f.project(p))) > 0.0) pts.push_back(p);
        std::vector<double> slack(pts.size());
        std::vector<int> cover(pts.size());  // 1 covered, 0 not covered, -1 excluded
        parallel_for(pts.size(), [&](std::size_t i) {
            const ParaPoint& p = pts[i];
            const double de = dist_to_graph(p, E, kWide).dist;
            slack[i] = de - dist_to_graph(p, up.graph, kWide).dist + tol;
            std::vector<std::size_t> hits;
            cells.containing(p, hits);
            if (de < wopt.min_dist || hits.empty()) {
                cover[i] = -1;
                return;
            }
            cover[i] = 0;
            for (std::size_t hcell : hits) {
                const WhitneyCube& I = w.cubes[hcell];
                for (int q : members) {
                    const Cube& Q = tree.cube(q);
                    if (I.dist_E < std::pow(eta, 4.0) * Q.diam) continue;
                    const double cut = K * Q.diam;
                    if (para_dist(I.box, Q.hull) > cut) continue;
                    const double dq = E.index().box_distance(I.box, Q.range, cut * (1 + 1e-12));
                    if (dq <= cut && I.dist_E <= dq) {
                        cover[i] = 1;
                        return;
                    }
                }
            }
        });
        Extreme dist3, miss;
        std::size_t excluded = 0, covered = 0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            dist3.low(slack[i], pts[i]);
            if (cover[i] < 0) ++excluded;
            else if (cover[i] == 1) ++covered;
            else miss.low(0.0, pts[i]);
        }
        Check c3 = make_check(std::string("clause3.dist") + tag, !dist3.set || dist3.value >= 0.0,
                              dist3.set ? dist3.value : 0.0, 0.0, pts.size(), dist3);
        rep.checks.push_back(c3);
        Check c4 = make_check(std::string("clause4.cover") + tag, !miss.set, static_cast<double>(covered),
                              static_cast<double>(pts.size() - excluded), pts.size(), miss);
        c4.excluded = excluded;
        rep.checks.push_back(c4);
    }

    // clause (5): balls around the graph point over the nearest Gamma point
    const GraphDistance foot = dist_to_graph(center, f, kWide);
    for (int s = 0; s < 2; ++s) {
        const char* tag = s == 0 ? "[+]" : "[-]";
        const ParaPoint cs = with_height(foot.foot, (*psis[s])(foot.foot));
        const double gap = para_dist(center, cs);
        const double outer = (gap + opt.M0 * std::pow(K, 0.75) * D) / (std::pow(K, 7.0 / 8.0) * D);
        const double inner = (gap + std::pow(K, 7.0 / 8.0) * D) / (K / 32.0 * D);
        rep.checks.push_back({std::string("clause5.outer") + tag, outer <= 1.0, outer, 1.0, 1, 0, point_str(cs)});
        rep.checks.push_back({std::string("clause5.inner") + tag, inner <= 1.0, inner, 1.0, 1, 0, point_str(cs)});
    }
    return rep;
}

nlohmann::json to_json(const Check& c) {
    nlohmann::json j = {{"name", c.name},       {"pass", c.pass},         {"samples", c.samples},
                        {"excluded", c.excluded}, {"witness", c.witness}};
    j["value"] = std::isfinite(c.value) ? nlohmann::json(c.value) : nlohmann::json("inf");
    j["bound"] = std::isfinite(c.bound) ? nlohmann::json(c.bound) : nlohmann::json("inf");
    return j;
}

nlohmann::json to_json(const DomainReport& r) {
    nlohmann::json checks = nlohmann::json::array();
    for (const Check& c : r.checks) checks.push_back(to_json(c));
    return {{"passed", r.passed()}, {"whitney_cubes", r.whitney_cubes}, {"regions", r.regions}, {"checks", checks}};
}

}  // namespace pcme
