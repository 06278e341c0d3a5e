#include "pcme/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>

#include "pcme/corona.hpp"
#include "pcme/dyadic.hpp"
#include "pcme/error.hpp"
#include "pcme/halfderiv.hpp"
#include "pcme/lift.hpp"
#include "pcme/regdist.hpp"
#include "pcme/whitney.hpp"

namespace pcme {

using nlohmann::json;

namespace {

// ---- config reading ------------------------------------------------------------

class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail("expected an object");
    }

    ~Reader() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(field(it.key()) + ": unknown field");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    double number(const std::string& key, double fallback) {
        if (!has(key)) return fallback;
        const json& v = j_.at(key);
        if (!v.is_number()) throw ConfigError(field(key) + ": expected a number");
        return v.get<double>();
    }

    int integer(const std::string& key, int fallback) {
        if (!has(key)) return fallback;
        const json& v = j_.at(key);
        if (!v.is_number_integer()) throw ConfigError(field(key) + ": expected an integer");
        return v.get<int>();
    }

    bool boolean(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        const json& v = j_.at(key);
        if (!v.is_boolean()) throw ConfigError(field(key) + ": expected true or false");
        return v.get<bool>();
    }

    std::string text(const std::string& key, const std::string& fallback, std::initializer_list<const char*> allowed) {
        if (!has(key)) return fallback;
        const json& v = j_.at(key);
        if (!v.is_string()) throw ConfigError(field(key) + ": expected a string");
        const std::string s = v.get<std::string>();
        if (allowed.size() > 0 && std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return s == a; })) {
            std::string msg = field(key) + ": expected one of";
            for (const char* a : allowed) msg += std::string(" ") + a;
            throw ConfigError(msg);
        }
        return s;
    }

    std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
        if (!has(key)) return fallback;
        const json& v = j_.at(key);
        if (!v.is_array()) throw ConfigError(field(key) + ": expected an array of numbers");
        std::vector<double> out;
        for (const json& e : v) {
            if (!e.is_number()) throw ConfigError(field(key) + ": expected an array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }

    std::pair<double, double> range(const std::string& key, std::pair<double, double> fallback) {
        if (!has(key)) return fallback;
        const std::vector<double> v = numbers(key, {});
        if (v.size() != 2 || !(v[0] < v[1])) throw ConfigError(field(key) + ": expected [lo, hi] with lo < hi");
        return {v[0], v[1]};
    }

    const json& child(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError((path_.empty() ? "config" : path_) + ": " + msg); }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

Box read_box(Reader& parent, const std::string& key, int dim, const Box& fallback) {
    if (!parent.has(key)) return fallback;
    Reader r(parent.child(key), parent.field(key));
    Box b = fallback;
    b.dim = dim;
    std::tie(b.t_lo, b.t_hi) = r.range("t", {fallback.t_lo, fallback.t_hi});
    const char* axes[2] = {"x", "x2"};
    for (int i = 0; i < dim; ++i) {
        const auto lh = r.range(axes[i], {fallback.lo[i], fallback.hi[i]});
        b.lo[i] = lh.first;
        b.hi[i] = lh.second;
        if (!(b.lo[i] < b.hi[i])) throw ConfigError(r.field(axes[i]) + ": required for this dimension");
    }
    return b;
}

std::vector<ParaPoint> read_points(Reader& r, const std::string& key, int dim) {
    std::vector<ParaPoint> out;
    if (!r.has(key)) return out;
    const json& v = r.child(key);
    if (!v.is_array()) throw ConfigError(r.field(key) + ": expected an array of points");
    for (const json& e : v) {
        ParaPoint p;
        p.dim = dim;
        if (e.is_number() && dim == 0) {
            p.t = e.get<double>();
        } else if (e.is_array() && static_cast<int>(e.size()) == dim + 1 &&
                   std::all_of(e.begin(), e.end(), [](const json& x) { return x.is_number(); })) {
            p.t = e[0].get<double>();
            for (int i = 0; i < dim; ++i) p.x[i] = e[static_cast<std::size_t>(i + 1)].get<double>();
        } else {
            throw ConfigError(r.field(key) + ": each point needs " + std::to_string(dim + 1) + " coordinates");
        }
        out.push_back(p);
    }
    return out;
}

Box default_region(int n) { return n == 1 ? base_box(1, 0.25, 0.75) : base_box(2, 0.0, 0.25, -0.5, 0.5); }

json box_json(const Box& b) {
    json j = {{"t", {b.t_lo, b.t_hi}}};
    const char* axes[2] = {"x", "x2"};
    for (int i = 0; i < b.dim; ++i) j[axes[i]] = {b.lo[i], b.hi[i]};
    return j;
}

json point_json(const ParaPoint& p) {
    json j = json::array({p.t});
    for (int i = 0; i < p.dim; ++i) j.push_back(p.x[i]);
    return j;
}

const char* data_kind_name(DataKind k) {
    switch (k) {
        case DataKind::constant: return "constant";
        case DataKind::linear: return "linear";
        case DataKind::quadratic: return "quadratic";
        case DataKind::step: return "step";
    }
    return "step";
}

// ---- pipeline pieces -----------------------------------------------------------

json assertion(const std::string& name, bool pass, double value = 0.0, double bound = 0.0) {
    json j = {{"name", name}, {"pass", pass}};
    j["value"] = std::isfinite(value) ? json(value) : json("inf");
    j["bound"] = std::isfinite(bound) ? json(bound) : json("inf");
    return j;
}

GraphSpec graph_at(const ExperimentConfig& c, double delta) {
    GraphSpec g = c.graph;
    g.delta = delta;
    return g;
}

struct Pipeline {
    const ExperimentConfig& config;
    double delta;
    std::shared_ptr<const SampledGraph> E;
    std::shared_ptr<const CubeTree> tree;
    std::unique_ptr<CoronaInput> corona;

    Pipeline(const ExperimentConfig& c, double d) : config(c), delta(d) {
        E = std::make_shared<const SampledGraph>(make_graph(graph_at(c, d)));
    }

    const CubeTree& cubes() {
        if (!tree) {
            Box region = config.cube_region;
            tree = std::make_shared<const CubeTree>(build_cubes_on_graph(*E, config.k_min, config.k_max, region));
        }
        return *tree;
    }

    SampledGraph make_perturbed(double amp) const {
        const ScalarField& base = E->field();
        std::vector<double> v(base.values().begin(), base.values().end());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += amp * std::sin(16.0 * base.grid().point(i).t);
        ScalarField f(base.grid(), std::move(v));
        const double b1 = lip_half_one(f);
        return SampledGraph(E->n(), std::move(f), b1, E->b2(), "perturbed regime graph");
    }

    const CoronaInput& coronas() {
        if (!corona) {
            cubes();
            const SampledGraph g = config.corona.perturb ? make_perturbed(config.corona.perturb_amp) : *E;
            if (config.corona.kind == "single")
                corona = std::make_unique<CoronaInput>(corona_single_regime(tree, g, config.eta));
            else if (config.corona.kind == "layered")
                corona = std::make_unique<CoronaInput>(corona_layered(tree, g, config.eta, config.corona.depth));
            else
                corona = std::make_unique<CoronaInput>(corona_all_bad(tree, config.eta));
        }
        return *corona;
    }
};

void write_text(const std::string& dir, const std::string& name, const std::string& body) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    std::ofstream out(std::filesystem::path(dir) / name);
    if (!out) throw ConfigError("cannot write " + (std::filesystem::path(dir) / name).string());
    out << body;
}

std::string suffix(double delta, bool many) {
    if (!many) return "";
    std::ostringstream s;
    s << "_d" << std::lround(1.0 / delta);
    return s.str();
}

json stage_cubes(Pipeline& p) {
    const CubeTree& tree = p.cubes();
    const double varrho[] = {0.15, 0.2, 0.3, 0.4};
    json rep = {{"cubes", tree.size()}};
    try {
        CubeAxiomReport a;
        try {
            a = verify_cube_axioms(tree, varrho);
        } catch (const ResolutionError&) {
            a = verify_cube_axioms(tree, {});  // grid too coarse for the layer fit
        }
        rep["diam_ratio"] = {a.min_diam_ratio, a.max_diam_ratio};
        rep["measure_ratio"] = {a.min_measure_ratio, a.max_measure_ratio};
        rep["boundary_fraction"] = a.boundary_fraction;
        rep["gamma"] = a.gamma;
        rep["gamma_constant"] = a.gamma_constant;
        rep["assertions"] = json::array({assertion("cube axioms", true)});
    } catch (const AssertionFailure& e) {
        rep["assertions"] = json::array({assertion(std::string("cube axioms: ") + e.what(), false)});
    }
    return rep;
}

WhitneyDecomposition whitney_for(Pipeline& p, const Box& domain) {
    return whitney_decompose(*p.E, domain, WhitneyOptions{p.config.whitney_root, p.config.whitney_depth, 0.0});
}

Box whitney_domain(const Pipeline& p) { return p.config.solve.box; }

json stage_whitney(Pipeline& p, const std::string& out, const std::string& sfx) {
    const WhitneyDecomposition w = whitney_for(p, whitney_domain(p));
    write_text(out, "whitney" + sfx + ".json", to_json(w).dump());
    double worst_lo = 1e300, worst_hi = 0.0;
    bool ok = true;
    for (const WhitneyCube& c : w.cubes) {
        worst_lo = std::min(worst_lo, c.dist_E / c.diam);
        worst_hi = std::max(worst_hi, c.dist_E / c.diam);
        ok = ok && c.dist_E <= 100.0 * c.diam;
    }
    return {{"cubes", w.cubes.size()},
            {"accepted_volume", w.accepted_volume},
            {"discarded_volume", w.discarded_volume},
            {"far_volume", w.far_volume},
            {"dist_over_diam", {worst_lo, worst_hi}},
            {"assertions", json::array({assertion("dist(I, E) <= 100 diam(I)", ok, worst_hi, 100.0)})}};
}

json stage_corona(Pipeline& p) {
    const CoronaInput& c = p.coronas();
    const CubeTree& tree = c.tree();
    json rep = {{"regimes", c.good().size()}, {"bad", c.bad().size()}};
    json asserts = json::array();
    json regimes = json::array();
    for (std::size_t r = 0; r < c.good().size(); ++r) {
        const Regime& reg = c.good()[r];
        const CoherencyReport coh = validate_coherent(tree, reg.cubes, true);
        const BilateralReport bil = bilateral_approx_check(tree, reg, c.eta(), c.K());
        regimes.push_back({{"maximal", tree.cube(reg.maximal).id.str()},
                           {"cubes", reg.cubes.size()},
                           {"coherent", coh.ok},
                           {"bilateral_worst", bil.worst_ratio},
                           {"set_to_graph", bil.max_set_to_graph},
                           {"graph_to_set", bil.max_graph_to_set}});
        asserts.push_back(assertion("regime " + std::to_string(r) + " coherent", coh.ok));
    }
    std::vector<double> weights(tree.size());
    for (std::size_t q = 0; q < tree.size(); ++q) weights[q] = tree.cube(static_cast<int>(q)).measure;
    json packing = json::array();
    for (int q0 : tree.generation(tree.k_min())) packing.push_back({{"q0", tree.cube(q0).id.str()}, {"ratio", packing_check(c, q0, weights)}});
    rep["regime_reports"] = regimes;
    rep["packing"] = packing;
    rep["assertions"] = asserts;
    return rep;
}

HSource h_for(Pipeline& p) {
    const ParaGrid& grid = p.E->grid();
    if (p.config.h_kind == "constant") return h_constant(grid, 1.0);
    if (p.config.h_kind == "distance") {
        ParaPoint o;
        o.dim = grid.dim();
        o.t = grid.box().t_lo - 0.25;
        return h_distance_to(grid, o);
    }
    const CoronaInput& c = p.coronas();
    if (c.good().empty()) throw ConfigError("regdist.h: half_stopping needs a good regime");
    const Regime& reg = c.good()[0];
    const StoppingDistance d(p.tree, reg.cubes);
    return h_half_stopping_distance(d, reg.graph, grid);
}

json stage_regdist(Pipeline& p) {
    json rep;
    try {
        WhitneyH w = whitney_wrt_h(h_for(p));
        rep["whitney_cubes"] = w.cubes.size();
        rep["unresolved"] = w.unresolved.size();
        rep["overlap"] = w.overlap;
        rep["overlap_bound"] = w.overlap_bound;
        rep["h_over_diam"] = {w.min_ratio, w.max_ratio};
        rep["neighbor_ratio"] = {w.min_neighbor_ratio, w.max_neighbor_ratio};
        const HField H(std::move(w));
        RegdistReport r = verify_regdist_props(H);
        r.pbmo = pbmo_norm(half_time_derivative(H.sample(), HalfMethod::spectral));
        rep["H"] = to_json(r);
        const WhitneyH& wh = H.whitney();
        rep["assertions"] = json::array({
            assertion("whitney wrt h criteria", true),
            assertion("10 diam <= h on 10I", wh.min_ratio >= 10.0 * (1 - 1e-12), wh.min_ratio, 10.0),
            assertion("h <= 60 diam on 10I", wh.max_ratio <= 60.0 * (1 + 1e-12), wh.max_ratio, 60.0),
            assertion("neighbor ratio >= 1/6", wh.pairs == 0 || wh.min_neighbor_ratio >= 1.0 / 6 - 1e-12,
                      wh.min_neighbor_ratio, 1.0 / 6),
            assertion("neighbor ratio <= 6", wh.pairs == 0 || wh.max_neighbor_ratio <= 6.0 + 1e-12, wh.max_neighbor_ratio, 6.0),
            assertion("overlap <= volume bound", static_cast<double>(wh.overlap) <= wh.overlap_bound,
                      static_cast<double>(wh.overlap), wh.overlap_bound),
            assertion("H >= h / 60", r.c1 >= 1.0 / 60 - 1e-12, r.c1, 1.0 / 60),
            assertion("H <= (3/5) N h", r.c2 <= r.upper_bound + 1e-12, r.c2, r.upper_bound),
        });
    } catch (const AssertionFailure& e) {
        rep["assertions"] = json::array({assertion(std::string("whitney wrt h: ") + e.what(), false)});
    }
    return rep;
}

json stage_lift(Pipeline& p) {
    const CoronaInput& c = p.coronas();
    json rep = json::object();
    json asserts = json::array();
    if (c.good().empty()) {
        rep["assertions"] = asserts;
        rep["note"] = "no good regime";
        return rep;
    }
    const RegimeLift ctx(p.tree, c.good()[0], p.config.eta);
    DomainOptions opt;
    opt.M0 = p.config.M0;
    opt.lattice = p.config.lift_lattice;
    opt.whitney.max_depth = p.config.lift_depth;
    const DomainReport d = corona_domain_report(ctx, opt);
    for (const Check& k : d.checks) {
        // measured constants without a bound are informational
        if (!std::isfinite(k.bound) || k.name.rfind("psi.H_over", 0) == 0 || k.name.rfind("g.", 0) == 0) continue;
        asserts.push_back(assertion(k.name, k.pass, k.value, k.bound));
    }
    rep["domain"] = to_json(d);
    rep["assertions"] = asserts;
    return rep;
}

std::vector<ParaPoint> default_bmo_centers(const Pipeline& p) {
    const Box& r = p.config.cube_region;
    std::vector<ParaPoint> out;
    for (double f : {0.25, 0.5, 0.75}) {
        ParaPoint c;
        c.dim = p.E->grid().dim();
        c.t = r.t_lo + f * (r.t_hi - r.t_lo);
        for (int i = 0; i < c.dim; ++i) c.x[i] = 0.5 * (r.lo[i] + r.hi[i]);
        out.push_back(c);
    }
    return out;
}

json stage_bmo(Pipeline& p) {
    json rep;
    const PbmoReport f = pbmo_report(half_time_derivative(p.E->field(), HalfMethod::spectral));
    rep["graph_pbmo"] = to_json(f);
    json asserts = json::array({assertion("P-BMO of the graph finite", std::isfinite(f.value), f.value, INFINITY)});
    try {
        const HField H(whitney_wrt_h(h_for(p)));
        const ScalarField Hs = H.sample();
        const PbmoReport hb = pbmo_report(half_time_derivative(Hs, HalfMethod::spectral));
        rep["H_pbmo"] = to_json(hb);
        asserts.push_back(assertion("P-BMO of H finite", std::isfinite(hb.value), hb.value, INFINITY));
        json nus = json::array();
        const auto centers = p.config.bmo_centers.empty() ? default_bmo_centers(p) : p.config.bmo_centers;
        for (const ParaPoint& c : centers)
            for (double rho : p.config.bmo_rhos) {
                const NuResult nu = carleson_nu(Hs, c, rho);
                json row = to_json(nu);
                row["center"] = point_json(c);
                row["rho"] = rho;
                nus.push_back(row);
                asserts.push_back(assertion("nu ratio finite", std::isfinite(nu.ratio), nu.ratio, INFINITY));
            }
        rep["nu"] = nus;
    } catch (const AssertionFailure& e) {
        asserts.push_back(assertion(std::string("H construction: ") + e.what(), false));
    }
    rep["assertions"] = asserts;
    return rep;
}

HeatField solve_for(const Pipeline& p) {
    HeatDomain d;
    d.box = p.config.solve.box;
    d.boundary = p.E;
    d.side = p.config.solve.side;
    return solve_heat(d, p.config.solve.data, p.delta, HeatOptions{p.config.solve.substeps, true});
}

json solve_summary(const HeatField& f) {
    std::size_t mask = 0, interior = 0;
    for (std::size_t i = 0; i < f.grid().size(); ++i) {
        mask += f.in_mask(i) ? 1 : 0;
        interior += f.interior(i) ? 1 : 0;
    }
    return {{"cells", f.grid().size()},   {"mask", mask},
            {"interior", interior},        {"sup_abs", f.sup_abs()},
            {"data_range", {f.data_min(), f.data_max()}}, {"substeps", f.substeps()},
            {"max_principle_excess", f.max_principle_excess()}};
}

json stage_solve(Pipeline& p) {
    try {
        const HeatField f = solve_for(p);
        json rep = solve_summary(f);
        rep["assertions"] = json::array({assertion("maximum principle", true, f.max_principle_excess(), 0.0)});
        return rep;
    } catch (const AssertionFailure& e) {
        return {{"assertions", json::array({assertion(std::string("maximum principle: ") + e.what(), false)})}};
    }
}

std::vector<ParaPoint> cme_centers(const Pipeline& p) {
    if (!p.config.cme_centers.empty()) return p.config.cme_centers;
    // seeded draw inside the part of the solve box that keeps the largest ball inside
    const double rmax = *std::max_element(p.config.cme_radii.begin(), p.config.cme_radii.end());
    const Box& b = p.config.solve.box;
    std::mt19937 rng(p.config.seed);
    std::uniform_real_distribution<double> ut(b.t_lo + rmax * rmax, b.t_hi - rmax * rmax);
    std::vector<ParaPoint> out;
    const int dim = p.E->grid().dim();
    for (int k = 0; k < 5; ++k) {
        ParaPoint c;
        c.dim = dim;
        c.t = ut(rng);
        if (dim > 0) c.x[0] = std::uniform_real_distribution<double>(b.lo[0] + rmax, b.hi[0] - rmax)(rng);
        out.push_back(c);
    }
    std::sort(out.begin(), out.end(), [](const ParaPoint& a, const ParaPoint& c) { return a.t < c.t; });
    return out;
}

json stage_cme(Pipeline& p, const std::string& out, const std::string& sfx) {
    try {
        const HeatField f = solve_for(p);
        const CmeTable t = cme_functional(f, *p.E, cme_centers(p), p.config.cme_radii);
        std::ostringstream csv;
        write_cme_csv(csv, t);
        write_text(out, "cme" + sfx + ".csv", csv.str());
        json rep = to_json(t);
        rep["solve"] = solve_summary(f);
        rep["assertions"] = json::array({assertion("maximum principle", true),
                                         assertion("CME sup finite", std::isfinite(t.sup), t.sup, INFINITY),
                                         assertion("CME sup with time term finite", std::isfinite(t.sup_time),
                                                   t.sup_time, INFINITY)});
        return rep;
    } catch (const AssertionFailure& e) {
        return {{"assertions", json::array({assertion(std::string("maximum principle: ") + e.what(), false)})}};
    }
}

json stage_pack(Pipeline& p, const std::string& out, const std::string& sfx) {
    const CoronaInput& c = p.coronas();
    const CubeTree& tree = c.tree();
    try {
        const HeatField f = solve_for(p);
        const WhitneyDecomposition w = whitney_for(p, whitney_domain(p));
        const std::vector<double> betas = beta_all(f, tree, w, p.config.eta);
        std::ostringstream csv;
        write_beta_csv(csv, tree, betas);
        write_text(out, "beta" + sfx + ".csv", csv.str());
        json rows = json::array();
        double worst = 0.0, A = 0.0;
        for (std::size_t q0 = 0; q0 < tree.size(); ++q0) {
            const PackingResult r = packing_sum(c, static_cast<int>(q0), betas);
            json row = to_json(r);
            row["cube"] = tree.cube(static_cast<int>(q0)).id.str();
            rows.push_back(row);
            worst = std::max(worst, r.ratio);
            A = std::max(A, r.max_beta_ratio);
        }
        return {{"packing", rows},
                {"max_ratio", worst},
                {"A", A},
                {"assertions", json::array({assertion("packing ratio finite", std::isfinite(worst), worst, INFINITY)})}};
    } catch (const AssertionFailure& e) {
        return {{"assertions", json::array({assertion(std::string("packing: ") + e.what(), false)})}};
    }
}

json stage_at(const std::string& stage, Pipeline& p, const std::string& out, const std::string& sfx) {
    if (stage == "cubes") return stage_cubes(p);
    if (stage == "whitney") return stage_whitney(p, out, sfx);
    if (stage == "corona") return stage_corona(p);
    if (stage == "regdist") return stage_regdist(p);
    if (stage == "lift") return stage_lift(p);
    if (stage == "bmo") return stage_bmo(p);
    if (stage == "solve") return stage_solve(p);
    if (stage == "cme") return stage_cme(p, out, sfx);
    if (stage == "pack") return stage_pack(p, out, sfx);
    throw ConfigError("stage: unknown stage " + stage);
}

bool same_shape(const json& a, const json& b) { return a.type() == b.type(); }

void drift_walk(const json& a, const json& b, const std::string& path, json& out, double& worst) {
    // counts scale with the grid; drift compares measured quantities only
    if (a.is_number_integer() || b.is_number_integer()) return;
    if (a.is_number() && b.is_number()) {
        const double x = a.get<double>(), y = b.get<double>();
        const double m = std::max(std::abs(x), std::abs(y));
        const double d = m == 0.0 ? 0.0 : std::abs(x - y) / m;
        out[path] = d;
        worst = std::max(worst, d);
        return;
    }
    if (!same_shape(a, b)) return;
    if (a.is_object()) {
        for (auto it = a.begin(); it != a.end(); ++it)
            if (b.contains(it.key())) drift_walk(it.value(), b.at(it.key()), path + "/" + it.key(), out, worst);
    } else if (a.is_array() && a.size() == b.size()) {
        for (std::size_t i = 0; i < a.size(); ++i) drift_walk(a[i], b[i], path + "/" + std::to_string(i), out, worst);
    }
}

json identity(json config) {
    config["graph"].erase("delta");
    config.erase("resolutions");
    return config;
}

}  // namespace

// ---- public ----------------------------------------------------------------------

ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
        const long line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
        throw ConfigError("config: malformed JSON at line " + std::to_string(line) + ": " + e.what());
    }
    ExperimentConfig c;
    Reader root(j, "");
    if (root.has("graph")) {
        Reader g(root.child("graph"), "graph");
        GraphSpec& s = c.graph;
        s.n = g.integer("n", s.n);
        if (s.n != 1 && s.n != 2) throw ConfigError("graph.n: must be 1 or 2");
        s.delta = g.number("delta", s.delta);
        if (!(s.delta > 0.0)) throw ConfigError("graph.delta: must be positive");
        s.box = read_box(g, "box", s.n - 1, base_box(s.n, -2.0, 2.0, -2.0, 2.0));
        s.kind = g.text("kind", s.kind, {"flat", "sine", "multiscale"});
        s.height = g.number("height", s.height);
        s.amp_x = g.number("amp_x", s.amp_x);
        s.k_x = g.number("k_x", s.k_x);
        s.amp_t = g.number("amp_t", s.amp_t);
        s.k_t = g.number("k_t", s.k_t);
        s.levels = g.integer("levels", s.levels);
        s.b2 = g.number("b2", s.b2);
    } else {
        c.graph.box = base_box(1, -2.0, 2.0);
    }
    const int n = c.graph.n;
    c.eta = root.number("eta", c.eta);
    if (!(c.eta > 0.0 && c.eta < 1.0)) throw ConfigError("eta: must lie in (0, 1)");
    if (root.has("K")) {
        const double K = root.number("K", 1.0 / c.eta);
        if (std::abs(c.eta * K - 1.0) > 1e-12) throw ConfigError("K: eta * K must equal 1");
    }
    c.alphas = root.numbers("alphas", c.alphas);
    for (double a : c.alphas)
        if (a < 7.0 / 8.0 - 1e-12 || a > 31.0 / 32.0 + 1e-12) throw ConfigError("alphas: values must lie in [7/8, 31/32]");
    if (root.has("cubes")) {
        Reader q(root.child("cubes"), "cubes");
        c.k_min = q.integer("k_min", c.k_min);
        c.k_max = q.integer("k_max", c.k_max);
        if (c.k_max < c.k_min) throw ConfigError("cubes.k_max: must be at least k_min");
        c.cube_region = read_box(q, "region", n - 1, default_region(n));
    } else {
        c.cube_region = default_region(n);
    }
    if (root.has("corona")) {
        Reader k(root.child("corona"), "corona");
        c.corona.kind = k.text("kind", c.corona.kind, {"single", "layered", "all_bad"});
        c.corona.depth = k.integer("depth", c.corona.depth);
        c.corona.perturb = k.boolean("perturb", c.corona.perturb);
        c.corona.perturb_amp = k.number("perturb_amp", c.corona.perturb_amp);
    }
    c.resolutions = root.numbers("resolutions", c.resolutions);
    for (double d : c.resolutions)
        if (!(d > 0.0)) throw ConfigError("resolutions: values must be positive");
    c.solve.box = Box{0.0, 1.0, {-1.0, -1.0}, {1.5, 1.5}, n};
    if (n == 2) c.solve.box = Box{0.0, 0.25, {-0.5, -0.5}, {0.5, 1.0}, 2};
    if (root.has("solve")) {
        Reader s(root.child("solve"), "solve");
        c.solve.box = read_box(s, "box", n, c.solve.box);
        c.solve.side = s.integer("side", c.solve.side);
        if (c.solve.side != 1 && c.solve.side != -1) throw ConfigError("solve.side: must be 1 or -1");
        c.solve.substeps = s.integer("substeps", c.solve.substeps);
        if (s.has("data")) {
            Reader d(s.child("data"), "solve.data");
            const std::string kind = d.text("kind", "step", {"constant", "linear", "quadratic", "step"});
            c.solve.data.kind = kind == "constant"  ? DataKind::constant
                                : kind == "linear"  ? DataKind::linear
                                : kind == "quadratic" ? DataKind::quadratic
                                                      : DataKind::step;
            c.solve.data.value = d.number("value", c.solve.data.value);
            c.solve.data.lo = d.number("lo", c.solve.data.lo);
            c.solve.data.hi = d.number("hi", c.solve.data.hi);
            c.solve.data.center = d.number("center", c.solve.data.center);
            c.solve.data.width = d.number("width", c.solve.data.width);
            c.solve.data.axis = d.integer("axis", c.solve.data.axis);
            if (!(c.solve.data.width > 0.0)) throw ConfigError("solve.data.width: must be positive");
        }
    }
    if (root.has("cme")) {
        Reader m(root.child("cme"), "cme");
        c.cme_centers = read_points(m, "centers", n - 1);
        c.cme_radii = m.numbers("radii", c.cme_radii);
        if (c.cme_radii.empty()) throw ConfigError("cme.radii: at least one radius");
    }
    if (root.has("bmo")) {
        Reader b(root.child("bmo"), "bmo");
        c.bmo_centers = read_points(b, "centers", n - 1);
        c.bmo_rhos = b.numbers("rhos", c.bmo_rhos);
    }
    if (root.has("regdist")) {
        Reader r(root.child("regdist"), "regdist");
        c.h_kind = r.text("h", c.h_kind, {"constant", "distance", "half_stopping"});
    }
    if (root.has("whitney")) {
        Reader w(root.child("whitney"), "whitney");
        c.whitney_root = w.number("root_side", c.whitney_root);
        c.whitney_depth = w.integer("max_depth", c.whitney_depth);
    }
    if (root.has("lift")) {
        Reader l(root.child("lift"), "lift");
        c.lift_lattice = l.integer("lattice", c.lift_lattice);
        c.lift_depth = l.integer("max_depth", c.lift_depth);
        c.M0 = l.number("M0", c.M0);
    }
    const int seed = root.integer("seed", static_cast<int>(c.seed));
    if (seed < 0) throw ConfigError("seed: must be nonnegative");
    c.seed = static_cast<unsigned>(seed);
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path);
    std::stringstream s;
    s << in.rdbuf();
    return parse_config(s.str());
}

json to_json(const ExperimentConfig& c) {
    const GraphSpec& g = c.graph;
    json cme_centers = json::array(), bmo_centers = json::array();
    for (const ParaPoint& p : c.cme_centers) cme_centers.push_back(point_json(p));
    for (const ParaPoint& p : c.bmo_centers) bmo_centers.push_back(point_json(p));
    const DataSpec& d = c.solve.data;
    return {
        {"graph",
         {{"n", g.n}, {"delta", g.delta}, {"box", box_json(g.box)}, {"kind", g.kind}, {"height", g.height},
          {"amp_x", g.amp_x}, {"k_x", g.k_x}, {"amp_t", g.amp_t}, {"k_t", g.k_t}, {"levels", g.levels}, {"b2", g.b2}}},
        {"eta", c.eta},
        {"K", 1.0 / c.eta},
        {"alphas", c.alphas},
        {"cubes", {{"k_min", c.k_min}, {"k_max", c.k_max}, {"region", box_json(c.cube_region)}}},
        {"corona",
         {{"kind", c.corona.kind}, {"depth", c.corona.depth}, {"perturb", c.corona.perturb},
          {"perturb_amp", c.corona.perturb_amp}}},
        {"resolutions", c.resolutions},
        {"solve",
         {{"box", box_json(c.solve.box)},
          {"side", c.solve.side},
          {"substeps", c.solve.substeps},
          {"data",
           {{"kind", data_kind_name(d.kind)}, {"value", d.value}, {"lo", d.lo}, {"hi", d.hi}, {"center", d.center},
            {"width", d.width}, {"axis", d.axis}}}}},
        {"cme", {{"centers", cme_centers}, {"radii", c.cme_radii}}},
        {"bmo", {{"centers", bmo_centers}, {"rhos", c.bmo_rhos}}},
        {"regdist", {{"h", c.h_kind}}},
        {"whitney", {{"root_side", c.whitney_root}, {"max_depth", c.whitney_depth}}},
        {"lift", {{"lattice", c.lift_lattice}, {"max_depth", c.lift_depth}, {"M0", c.M0}}},
        {"seed", c.seed},
    };
}

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names{"cubes", "whitney", "corona", "regdist", "lift",
                                                "bmo",   "solve",   "cme",    "pack"};
    return names;
}

json run_stage(const std::string& stage, const ExperimentConfig& config, const std::string& out_dir) {
    const std::vector<std::string> stages = stage == "all" ? stage_names() : std::vector<std::string>{stage};
    for (const std::string& s : stages)
        if (std::find(stage_names().begin(), stage_names().end(), s) == stage_names().end())
            throw ConfigError("stage: unknown stage " + s);
    std::vector<double> deltas = config.resolutions.empty() ? std::vector<double>{config.graph.delta} : config.resolutions;
    const bool many = deltas.size() > 1;

    json report = {{"config", to_json(config)}, {"stage", stage}};
    json runs = json::array();
    for (double delta : deltas) {
        Pipeline p(config, delta);
        json run = {{"delta", delta}};
        for (const std::string& s : stages) run[s] = stage_at(s, p, out_dir, suffix(delta, many));
        runs.push_back(run);
    }
    report["runs"] = runs;
    if (many) {
        json drift = json::object();
        for (std::size_t k = 1; k < runs.size(); ++k) {
            json table = json::object();
            double worst = 0.0;
            for (const std::string& s : stages) drift_walk(runs[0][s], runs[k][s], "/" + s, table, worst);
            drift[std::to_string(k)] = {{"max", worst}, {"entries", table}};
        }
        report["drift"] = drift;
    }
    report["pass"] = report_passed(report);
    return report;
}

bool report_passed(const json& report) {
    bool ok = true;
    std::function<void(const json&)> walk = [&](const json& j) {
        if (j.is_object()) {
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (it.key() == "assertions" && it.value().is_array()) {
                    for (const json& a : it.value())
                        if (a.contains("pass") && !a["pass"].get<bool>()) ok = false;
                } else {
                    walk(it.value());
                }
            }
        } else if (j.is_array()) {
            for (const json& e : j) walk(e);
        }
    };
    walk(report);
    return ok;
}

json compare_reports(const json& a, const json& b) {
    if (!a.contains("config") || !b.contains("config")) throw ConfigError("compare: reports carry no config");
    if (identity(a["config"]) != identity(b["config"]))
        throw ConfigError("compare: reports come from different experiments");
    if (a.value("stage", "") != b.value("stage", "")) throw ConfigError("compare: reports cover different stages");
    json table = json::object();
    double worst = 0.0;
    const json& ra = a["runs"].back();
    const json& rb = b["runs"].back();
    for (auto it = ra.begin(); it != ra.end(); ++it)
        if (it.key() != "delta" && rb.contains(it.key())) drift_walk(it.value(), rb[it.key()], "/" + it.key(), table, worst);
    return {{"delta_a", ra["delta"]}, {"delta_b", rb["delta"]}, {"max", worst}, {"entries", table}};
}

}  // namespace pcme
