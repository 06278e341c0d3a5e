#include "pcme/caloric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "pcme/error.hpp"
#include "pcme/parallel.hpp"

namespace pcme {

namespace {

constexpr double kWide = 1e9;

std::string point_str(const ParaPoint& p) {
    std::ostringstream s;
    s.precision(10);
    s << "(t=" << p.t;
    for (int i = 0; i < p.dim; ++i) s << ", x" << i + 1 << "=" << p.x[static_cast<std::size_t>(i)];
    s << ")";
    return s.str();
}

// Sample index window [a, b) of the cells whose centers can lie in [lo, hi].
void index_window(double lo_frac, double hi_frac, std::size_t count, std::size_t& a, std::size_t& b) {
    a = static_cast<std::size_t>(std::clamp(std::ceil(lo_frac - 1e-9), 0.0, static_cast<double>(count)));
    b = static_cast<std::size_t>(std::clamp(std::floor(hi_frac + 1e-9) + 1.0, 0.0, static_cast<double>(count)));
}

template <class Fn>
void for_cells_in_box(const ParaGrid& grid, const Box& b, const Fn& fn) {
    std::size_t t0, t1, x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    index_window(grid.t_frac(b.t_lo), grid.t_frac(b.t_hi), grid.nt(), t0, t1);
    if (grid.dim() > 0) index_window(grid.x_frac(0, b.lo[0]), grid.x_frac(0, b.hi[0]), grid.nx(0), x0, x1);
    if (grid.dim() > 1) index_window(grid.x_frac(1, b.lo[1]), grid.x_frac(1, b.hi[1]), grid.nx(1), y0, y1);
    for (std::size_t it = t0; it < t1; ++it)
        for (std::size_t ix = x0; ix < x1; ++ix)
            for (std::size_t iy = y0; iy < y1; ++iy) fn(grid.index(it, ix, iy));
}

Box ball_bounds(const ParaBall& ball) {
    Box b;
    b.dim = ball.center.dim;
    const double r = ball.radius;
    b.t_lo = ball.center.t - r * r;
    b.t_hi = ball.center.t + r * r;
    for (int i = 0; i < b.dim; ++i) {
        b.lo[i] = ball.center.x[i] - r;
        b.hi[i] = ball.center.x[i] + r;
    }
    return b;
}

bool box_inside(const Box& inner, const Box& outer) {
    const double eps = 1e-12;
    if (inner.t_lo < outer.t_lo - eps || inner.t_hi > outer.t_hi + eps) return false;
    for (int i = 0; i < inner.dim; ++i)
        if (inner.lo[i] < outer.lo[i] - eps || inner.hi[i] > outer.hi[i] + eps) return false;
    return true;
}

template <class Fn>
void for_cells_in_ball(const ParaGrid& grid, const ParaBall& ball, const Fn& fn) {
    for_cells_in_box(grid, ball_bounds(ball), [&](std::size_t i) {
        if (ball.contains(grid.point(i))) fn(i);
    });
}

}  // namespace

double DataSpec::operator()(const ParaPoint& p) const {
    switch (kind) {
        case DataKind::constant:
            return value;
        case DataKind::linear:
            return value * p.x[0];
        case DataKind::quadratic: {
            double s = 0.0;
            for (int i = 0; i < p.dim; ++i) s += p.x[i] * p.x[i];
            return s / (2.0 * p.dim) + p.t;
        }
        case DataKind::step: {
            const int ax = axis >= 0 ? axis : (p.dim >= 2 ? 1 : 0);
            const double s = ax == 0 ? p.t : p.x[static_cast<std::size_t>(ax - 1)];
            return lo + (hi - lo) * 0.5 * (1.0 + std::tanh((s - center) / width));
        }
    }
    return 0.0;
}

double HeatField::grad_sq(std::size_t i) const {
    double s = 0.0;
    for (int k = 0; k < n(); ++k) s += grad(i, k) * grad(i, k);
    return s;
}

HeatField solve_heat(const HeatDomain& domain, const DataSpec& data, double delta, const HeatOptions& opt) {
    const int n = domain.box.dim;
    if (n < 1) throw DimensionError("heat: the box needs at least one spatial axis");
    if (domain.boundary && domain.boundary->n() != n) throw DimensionError("heat: graph and box differ in dimension");
    if (domain.side != 1 && domain.side != -1) throw ParameterError("heat: side must be +1 or -1");
    const int m = opt.substeps == 0 ? 4 * n : opt.substeps;
    if (m < 2 * n) throw ParameterError("heat: CFL violated, need at least 2n substeps per delta^2");
    if (m % 2 != 0) throw ParameterError("heat: substeps per delta^2 must be even");

    HeatField out;
    out.grid_ = ParaGrid(domain.box, delta);
    out.domain_ = domain;
    if (!out.domain_.E) out.domain_.E = domain.boundary;
    out.substeps_ = m;
    const ParaGrid& grid = out.grid_;
    const std::size_t nt = grid.nt(), nx0 = grid.nx(0), nx1 = grid.nx(1);
    const std::size_t slab = nx0 * nx1;
    const std::size_t size = grid.size();

    // masks and boundary layer per slab
    out.flags_.assign(size, 0);
    parallel_for(nt, [&](std::size_t it) {
        for (std::size_t c = 0; c < slab; ++c) {
            const std::size_t i = it * slab + c;
            if (!domain.boundary) {
                out.flags_[i] = kInMask;
                continue;
            }
            const ParaPoint p = grid.point(i);
            const double xn = p.x[static_cast<std::size_t>(n - 1)];
            const double g = domain.boundary->eval(domain.boundary->project(p));
            if (domain.side * (xn - g) > 0.0) out.flags_[i] = kInMask;
        }
        for (std::size_t c = 0; c < slab; ++c) {
            const std::size_t i = it * slab + c;
            if (!(out.flags_[i] & kInMask)) continue;
            const std::size_t ix = c / nx1, iy = c % nx1;
            bool edge = ix == 0 || ix + 1 == nx0 || (n > 1 && (iy == 0 || iy + 1 == nx1));
            if (!edge) {
                const std::size_t nb[4] = {i - nx1, i + nx1, i - 1, i + 1};
                for (int k = 0; k < 2 * n; ++k)
                    if (!(out.flags_[nb[k]] & kInMask)) edge = true;
            }
            if (edge) out.flags_[i] |= kBoundary;
        }
    });
    std::size_t active = 0;
    for (unsigned char f : out.flags_) active += f & kInMask ? 1 : 0;
    if (active == 0) throw ResolutionError("heat: empty domain");

    const double lambda = 1.0 / m;
    const double dts = delta * delta / m;
    std::vector<double> cur(slab, 0.0), next(slab, 0.0);
    std::vector<char> live(slab, 0);
    std::vector<ParaPoint> centers(slab);
    for (std::size_t c = 0; c < slab; ++c) centers[c] = grid.point(c);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    auto at = [&](std::size_t c, double t) {
        ParaPoint p = centers[c];
        p.t = t;
        return data(p);
    };

    out.u_.assign(size, 0.0);
    double t = grid.box().t_lo;
    const std::size_t chunk = 1024;
    const std::size_t chunks = (slab + chunk - 1) / chunk;
    std::vector<double> chunk_excess(chunks);
    std::vector<std::size_t> chunk_where(chunks);
    for (std::size_t it = 0; it < nt; ++it) {
        const unsigned char* fl = &out.flags_[it * slab];
        // cells entering the domain take the data
        for (std::size_t c = 0; c < slab; ++c) {
            if ((fl[c] & kInMask) && !live[c]) {
                cur[c] = at(c, t);
                lo = std::min(lo, cur[c]);
                hi = std::max(hi, cur[c]);
            }
            live[c] = fl[c] & kInMask ? 1 : 0;
        }
        const int steps = it == 0 ? m / 2 : m;
        for (int s = 0; s < steps; ++s) {
            const double tn = t + dts;
            for (std::size_t c = 0; c < slab; ++c)
                if ((fl[c] & kInMask) && (fl[c] & kBoundary)) {
                    next[c] = at(c, tn);
                    lo = std::min(lo, next[c]);
                    hi = std::max(hi, next[c]);
                }
            const double tol = 1e-12 * std::max({1.0, std::abs(lo), std::abs(hi)});
            auto run = [&](std::size_t k) {
                double worst = 0.0;
                std::size_t where = 0;
                const std::size_t end = std::min(slab, (k + 1) * chunk);
                for (std::size_t c = k * chunk; c < end; ++c) {
                    if (!(fl[c] & kInMask) || (fl[c] & kBoundary)) continue;
                    double lap = cur[c - nx1] + cur[c + nx1] - 2.0 * cur[c];
                    if (n > 1) lap += cur[c - 1] + cur[c + 1] - 2.0 * cur[c];
                    const double v = cur[c] + lambda * lap;
                    next[c] = v;
                    const double e = std::max(v - hi, lo - v);
                    if (e > worst) worst = e, where = c;
                }
                chunk_excess[k] = worst;
                chunk_where[k] = where;
            };
            if (chunks > 1 && slab >= 8192) {
                parallel_for(chunks, run);
            } else {
                for (std::size_t k = 0; k < chunks; ++k) run(k);
            }
            for (std::size_t k = 0; k < chunks; ++k) {
                if (chunk_excess[k] > out.excess_) out.excess_ = chunk_excess[k];
                if (opt.check_max_principle && chunk_excess[k] > tol) {
                    ParaPoint p = centers[chunk_where[k]];
                    p.t = tn;
                    std::ostringstream msg;
                    msg << "heat: maximum principle violated by " << chunk_excess[k] << " at " << point_str(p);
                    throw AssertionFailure(msg.str());
                }
            }
            std::swap(cur, next);
            t = tn;
        }
        for (std::size_t c = 0; c < slab; ++c)
            if (fl[c] & kInMask) out.u_[it * slab + c] = cur[c];
    }
    out.data_min_ = lo;
    out.data_max_ = hi;
    for (std::size_t i = 0; i < size; ++i)
        if (out.flags_[i] & kInMask) out.sup_abs_ = std::max(out.sup_abs_, std::abs(out.u_[i]));

    // centered differences on the interior
    for (int k = 0; k < n; ++k) out.grad_[static_cast<std::size_t>(k)].assign(size, 0.0);
    out.dt_.assign(size, 0.0);
    const double dt2 = 2.0 * grid.time_step();
    parallel_for(nt, [&](std::size_t it) {
        if (it == 0 || it + 1 == nt) return;
        for (std::size_t c = 0; c < slab; ++c) {
            const std::size_t i = it * slab + c;
            const unsigned char f = out.flags_[i];
            if (!(f & kInMask) || (f & kBoundary)) continue;
            if (!(out.flags_[i - slab] & kInMask) || !(out.flags_[i + slab] & kInMask)) continue;
            out.flags_[i] |= kInterior;
            out.grad_[0][i] = (out.u_[i + nx1] - out.u_[i - nx1]) / (2.0 * delta);
            if (n > 1) out.grad_[1][i] = (out.u_[i + 1] - out.u_[i - 1]) / (2.0 * delta);
            out.dt_[i] = (out.u_[i + slab] - out.u_[i - slab]) / dt2;
        }
    });

    out.dist_.assign(size, 0.0);
    if (out.domain_.E) {
        const SampledGraph& E = *out.domain_.E;
        out.has_dist_ = true;
        parallel_for(nt, [&](std::size_t it) {
            for (std::size_t c = 0; c < slab; ++c) {
                const std::size_t i = it * slab + c;
                if (out.flags_[i] & kInMask) out.dist_[i] = dist_to_graph(grid.point(i), E, kWide).dist;
            }
        });
    }
    return out;
}

double caccioppoli_ratio(const HeatField& field, const ParaBall& ball, double alpha) {
    if (!(alpha > 0.0)) throw ParameterError("caccioppoli: alpha must be positive");
    if (ball.center.dim != field.n()) throw DimensionError("caccioppoli: ball and field differ in dimension");
    const ParaGrid& grid = field.grid();
    const ParaBall big{ball.center, (1.0 + alpha) * ball.radius};
    if (!box_inside(ball_bounds(big), grid.box()))
        throw OutOfWindowError("caccioppoli: enlarged ball leaves the solved box");
    double num = 0.0, den = 0.0;
    for_cells_in_ball(grid, big, [&](std::size_t i) {
        if (!field.in_mask(i)) throw OutOfWindowError("caccioppoli: enlarged ball leaves the domain");
        den += field.u(i) * field.u(i);
        if (field.interior(i) && ball.contains(grid.point(i))) num += field.grad_sq(i);
    });
    const double r = ball.radius;
    if (den == 0.0) return 0.0;
    return num / (den / (r * r));
}

CmeTable cme_functional(const HeatField& field, const SampledGraph& g, std::span<const ParaPoint> centers,
                        std::span<const double> radii) {
    if (!field.has_dist()) throw ParameterError("cme: the field carries no distance to E");
    const ParaGrid& grid = field.grid();
    const double floor = 8.0 * grid.delta();
    for (double r : radii)
        if (r < floor * (1.0 - 1e-12)) throw ResolutionError("cme: radius below 8 delta");
    CmeTable out;
    out.rows.resize(centers.size() * radii.size());
    const double norm = field.sup_abs() > 0.0 ? 1.0 / (field.sup_abs() * field.sup_abs()) : 0.0;
    const int n = field.n();
    parallel_for(out.rows.size(), [&](std::size_t k) {
        CmeRow& row = out.rows[k];
        row.center = g.lift(centers[k / radii.size()]);
        row.r = radii[k % radii.size()];
        const ParaBall ball{row.center, row.r};
        if (!box_inside(ball_bounds(ball), grid.box()))
            throw OutOfWindowError("cme: ball around " + point_str(row.center) + " leaves the solved box");
        double a = 0.0, b = 0.0;
        for_cells_in_ball(grid, ball, [&](std::size_t i) {
            if (!field.interior(i)) return;
            const double d = field.dist_E(i);
            const double gs = field.grad_sq(i);
            a += gs * d;
            b += (gs + d * d * field.du_dt(i) * field.du_dt(i)) * d;
            ++row.cells;
        });
        const double scale = grid.cell_volume() * norm / std::pow(row.r, n + 1);
        row.value = a * scale;
        row.value_time = b * scale;
    });
    for (const CmeRow& r : out.rows) {
        out.sup = std::max(out.sup, r.value);
        out.sup_time = std::max(out.sup_time, r.value_time);
    }
    return out;
}

double beta_Q(const HeatField& field, const WhitneyRegion& region, const WhitneyDecomposition& w) {
    const ParaGrid& grid = field.grid();
    const double norm = field.sup_abs() > 0.0 ? 1.0 / (field.sup_abs() * field.sup_abs()) : 0.0;
    double sum = 0.0;
    for (std::size_t m : region.members) {
        const Box& b = w.cubes[m].box;
        if (!box_inside(b, grid.box())) throw OutOfWindowError("beta: Whitney box leaves the solved box");
        for_cells_in_box(grid, b, [&](std::size_t i) {
            if (field.interior(i) && b.contains(grid.point(i))) sum += field.grad_sq(i) * field.dist_E(i);
        });
    }
    return sum * grid.cell_volume() * norm;
}

double dirichlet_total(const HeatField& field) {
    const double norm = field.sup_abs() > 0.0 ? 1.0 / (field.sup_abs() * field.sup_abs()) : 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < field.grid().size(); ++i)
        if (field.interior(i)) sum += field.grad_sq(i) * field.dist_E(i);
    return sum * field.grid().cell_volume() * norm;
}

std::vector<double> beta_all(const HeatField& field, const CubeTree& tree, const WhitneyDecomposition& w,
                             double eta) {
    std::vector<double> out(tree.size());
    parallel_for(tree.size(), [&](std::size_t q) {
        const WhitneyRegion r = whitney_region(tree, static_cast<int>(q), eta, 1.0 / eta, false, w);
        out[q] = beta_Q(field, r, w);
    });
    return out;
}

PackingResult packing_sum(const CoronaInput& corona, int q0, std::span<const double> betas) {
    const CubeTree& tree = corona.tree();
    if (betas.size() != tree.size()) throw DimensionError("packing: one beta per cube expected");
    PackingResult out;
    out.q0 = q0;
    out.sigma = tree.cube(q0).measure;
    for (int q : tree.descendants(q0)) {
        const double b = betas[static_cast<std::size_t>(q)];
        out.total += b;
        out.max_beta_ratio = std::max(out.max_beta_ratio, b / tree.cube(q).measure);
    }
    const SubregimeSplit split = subregime_decompose(corona, q0);
    for (int q : split.bad) out.bad += betas[static_cast<std::size_t>(q)];
    for (int r : split.regimes)
        for (int q : corona.good()[static_cast<std::size_t>(r)].cubes) out.regimes += betas[static_cast<std::size_t>(q)];
    for (int q : split.tail) out.tail += betas[static_cast<std::size_t>(q)];
    const double parts = out.bad + out.regimes + out.tail;
    if (std::abs(parts - out.total) > 1e-9 * std::max(1.0, out.total))
        throw AssertionFailure("packing: corona parts do not add up to the total");
    out.ratio = out.total / out.sigma;
    return out;
}

void write_cme_csv(std::ostream& out, const CmeTable& table) {
    const int dim = table.rows.empty() ? 1 : table.rows.front().center.dim;
    out << "center_t";
    for (int i = 0; i < dim; ++i) out << ",center_x" << i + 1;
    out << ",r,value,value_with_time_term\n";
    out.precision(std::numeric_limits<double>::max_digits10);
    for (const CmeRow& r : table.rows) {
        out << r.center.t;
        for (int i = 0; i < dim; ++i) out << ',' << r.center.x[i];
        out << ',' << r.r << ',' << r.value << ',' << r.value_time << '\n';
    }
}

void write_beta_csv(std::ostream& out, const CubeTree& tree, std::span<const double> betas) {
    out << "cube,k,t,x,beta,sigma\n";
    out.precision(std::numeric_limits<double>::max_digits10);
    for (std::size_t q = 0; q < tree.size(); ++q) {
        const Cube& c = tree.cube(static_cast<int>(q));
        out << c.id.str() << ',' << c.id.k << ',' << c.id.t << ',' << c.id.x << ',' << betas[q] << ',' << c.measure
            << '\n';
    }
}

nlohmann::json to_json(const CmeTable& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (const CmeRow& r : t.rows) {
        std::vector<double> c{r.center.t};
        for (int i = 0; i < r.center.dim; ++i) c.push_back(r.center.x[i]);
        rows.push_back({{"center", c}, {"r", r.r}, {"value", r.value}, {"value_time", r.value_time}, {"cells", r.cells}});
    }
    return {{"sup", t.sup}, {"sup_time", t.sup_time}, {"rows", rows}};
}

nlohmann::json to_json(const PackingResult& p) {
    return {{"q0", p.q0},           {"sigma", p.sigma},     {"total", p.total},
            {"bad", p.bad},         {"regimes", p.regimes}, {"tail", p.tail},
            {"ratio", p.ratio},     {"max_beta_ratio", p.max_beta_ratio}};
}

}  // namespace pcme
