#include "pcme/halfderiv.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <vector>

#include "pcme/error.hpp"
#include "pcme/parallel.hpp"

namespace pcme {

namespace {

// Plan creation and destruction in FFTW are not thread safe; execution on
// fresh aligned buffers is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

template <class T>
struct FftwBuffer {
    explicit FftwBuffer(std::size_t n) : data(static_cast<T*>(fftw_malloc(sizeof(T) * std::max<std::size_t>(n, 1)))) {
        if (!data) throw std::bad_alloc();
    }
    ~FftwBuffer() { fftw_free(data); }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;
    T* data;
};

// Real filter on the even reflection of each time column: the series of
// length nt is reflected to period P = 2 nt, transformed, multiplied by
// symbol[k] (k = 0 .. P/2) and transformed back.
class ReflectFilter {
public:
    explicit ReflectFilter(std::size_t nt) : nt_(nt), p_(2 * nt) {
        FftwBuffer<double> in(p_);
        FftwBuffer<fftw_complex> out(p_ / 2 + 1);
        std::lock_guard lock(planner_mutex());
        forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(p_), in.data, out.data, FFTW_ESTIMATE);
        backward_ = fftw_plan_dft_c2r_1d(static_cast<int>(p_), out.data, in.data, FFTW_ESTIMATE);
    }
    ~ReflectFilter() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(backward_);
    }
    ReflectFilter(const ReflectFilter&) = delete;
    ReflectFilter& operator=(const ReflectFilter&) = delete;

    std::size_t period() const { return p_; }

    /// Filters the column of `values` starting at `offset` with stride `stride`.
    void apply(const std::vector<double>& symbol, std::span<const double> values, std::size_t offset,
               std::size_t stride, std::vector<double>& result) const {
        FftwBuffer<double> in(p_);
        FftwBuffer<fftw_complex> spec(p_ / 2 + 1);
        for (std::size_t i = 0; i < nt_; ++i) {
            const double v = values[offset + i * stride];
            in.data[i] = v;
            in.data[p_ - 1 - i] = v;
        }
        fftw_execute_dft_r2c(forward_, in.data, spec.data);
        for (std::size_t k = 0; k <= p_ / 2; ++k) {
            spec.data[k][0] *= symbol[k];
            spec.data[k][1] *= symbol[k];
        }
        fftw_execute_dft_c2r(backward_, spec.data, in.data);
        const double scale = 1.0 / static_cast<double>(p_);
        for (std::size_t i = 0; i < nt_; ++i) result[offset + i * stride] = in.data[i] * scale;
    }

    /// Real spectrum of an even periodic sequence w of length P.
    std::vector<double> even_spectrum(const std::vector<double>& w) const {
        FftwBuffer<double> in(p_);
        FftwBuffer<fftw_complex> spec(p_ / 2 + 1);
        std::copy(w.begin(), w.end(), in.data);
        fftw_execute_dft_r2c(forward_, in.data, spec.data);
        std::vector<double> out(p_ / 2 + 1);
        for (std::size_t k = 0; k <= p_ / 2; ++k) out[k] = spec.data[k][0];
        return out;
    }

private:
    std::size_t nt_;
    std::size_t p_;
    fftw_plan forward_{};
    fftw_plan backward_{};
};

std::vector<double> spectral_symbol(std::size_t p, double dt) {
    std::vector<double> s(p / 2 + 1);
    const double base = 2.0 * std::numbers::pi / (static_cast<double>(p) * dt);
    for (std::size_t k = 0; k < s.size(); ++k) s[k] = std::sqrt(base * static_cast<double>(k));
    return s;
}

// Periodized weights of the kernel |s|^{-3/2}: cell integrals for |m| <= M
// folded onto residues mod P, the tail beyond M spread evenly (the series
// averages over a period there), and the singular cell through the second
// difference: int_{|s| < dt/2} (g(t+s) - g(t)) |s|^{-3/2} ~ g'' (2/3) (dt/2)^{3/2}.
std::vector<double> pv_symbol(const ReflectFilter& f, double dt) {
    const std::size_t p = f.period();
    const std::size_t m_max = 32 * p;
    std::vector<double> w(p, 0.0);
    auto inv_sqrt = [&](double m) { return 1.0 / std::sqrt(m * dt); };
    for (std::size_t m = 1; m <= m_max; ++m) {
        const double wm = 2.0 * (inv_sqrt(static_cast<double>(m) - 0.5) - inv_sqrt(static_cast<double>(m) + 0.5));
        w[m % p] += wm;
        w[(p - m % p) % p] += wm;
    }
    const double tail = 2.0 * inv_sqrt(static_cast<double>(m_max) + 0.5);
    for (double& v : w) v += 2.0 * tail / static_cast<double>(p);
    const double c0 = (2.0 / 3.0) * std::pow(0.5 * dt, 1.5) / (dt * dt);
    w[1] += c0;
    w[p - 1] += c0;
    // D_i = c_hat sum_r w_r (e_{i+r} - e_i); the r = 0 weight cancels.
    w[0] = 0.0;
    std::vector<double> spec = f.even_spectrum(w);
    const double total = spec[0];
    for (double& v : spec) v = c_hat() * (v - total);
    return spec;
}

bool inside(const Box& inner, const Box& outer) {
    const double eps = 1e-12;
    if (inner.t_lo < outer.t_lo - eps || inner.t_hi > outer.t_hi + eps) return false;
    for (int i = 0; i < inner.dim; ++i)
        if (inner.lo[i] < outer.lo[i] - eps || inner.hi[i] > outer.hi[i] + eps) return false;
    return true;
}

// Solves a x = b (size <= 3) by Gaussian elimination with partial pivoting;
// singular directions are dropped.
void solve_small(std::array<std::array<double, 3>, 3> a, std::array<double, 3> b, int m, std::array<double, 3>& x) {
    std::array<bool, 3> dead{};
    const double scale = std::max({std::abs(a[0][0]), m > 1 ? std::abs(a[1][1]) : 0.0, m > 2 ? std::abs(a[2][2]) : 0.0});
    for (int c = 0; c < m; ++c) {
        int best = c;
        for (int r = c + 1; r < m; ++r)
            if (std::abs(a[r][c]) > std::abs(a[best][c])) best = r;
        std::swap(a[c], a[best]);
        std::swap(b[c], b[best]);
        if (std::abs(a[c][c]) <= 1e-13 * scale) {
            dead[c] = true;
            continue;
        }
        for (int r = c + 1; r < m; ++r) {
            const double f = a[r][c] / a[c][c];
            for (int k = c; k < m; ++k) a[r][k] -= f * a[c][k];
            b[r] -= f * b[c];
        }
    }
    std::array<double, 3> y{};
    for (int c = m - 1; c >= 0; --c) {
        if (dead[c]) continue;
        double s = b[c];
        for (int k = c + 1; k < m; ++k) s -= a[c][k] * y[k];
        y[c] = s / a[c][c];
    }
    x = y;
}

}  // namespace

double c_hat() { return -1.0 / (2.0 * std::sqrt(2.0 * std::numbers::pi)); }

ScalarField half_time_derivative(const ScalarField& g, HalfMethod method) {
    const ParaGrid& grid = g.grid();
    const std::size_t nt = grid.nt();
    if (nt < 4) throw ResolutionError("half derivative: fewer than 4 time samples");
    const ReflectFilter filter(nt);
    const std::vector<double> symbol = method == HalfMethod::spectral
                                           ? spectral_symbol(filter.period(), grid.time_step())
                                           : pv_symbol(filter, grid.time_step());
    const std::size_t stride = grid.nx(0) * grid.nx(1);
    std::vector<double> out(grid.size());
    const std::span<const double> values = g.values();
    parallel_for(stride, [&](std::size_t c) { filter.apply(symbol, values, c, stride, out); });
    return ScalarField(grid, std::move(out));
}

double pv_calibration(std::size_t nt) {
    const double delta = 1.0 / std::sqrt(static_cast<double>(nt));
    const ParaGrid grid(base_box(1, 0.0, 1.0), delta);
    const ScalarField g =
        ScalarField::sample(grid, [](const ParaPoint& p) { return std::cos(2.0 * std::numbers::pi * p.t); });
    const ScalarField spec = half_time_derivative(g, HalfMethod::spectral);
    const ScalarField pv = half_time_derivative(g, HalfMethod::pv);
    double sp = 0.0, pp = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        sp += spec[i] * pv[i];
        pp += pv[i] * pv[i];
    }
    return sp / pp;
}

PbmoReport pbmo_report(const ScalarField& g, Box window, double min_side) {
    const ParaGrid& grid = g.grid();
    if (window.dim < 0) window = grid.box();
    if (window.dim != grid.dim()) throw DimensionError("pbmo: window dimension differs from the field");
    if (!inside(window, grid.box())) throw OutOfWindowError("pbmo: window leaves the grid box");
    const double delta = grid.delta();
    if (min_side <= 0.0) min_side = 2.0 * delta;
    const int dim = grid.dim();

    // Samples whose centers lie in the window.
    const auto first = [](double frac) { return static_cast<std::size_t>(std::max(0.0, std::ceil(frac - 1e-9))); };
    const auto end = [](double frac, std::size_t count) {
        const double e = std::ceil(frac - 1e-9);
        return static_cast<std::size_t>(std::clamp(e, 0.0, static_cast<double>(count)));
    };
    const std::size_t t0 = first(grid.t_frac(window.t_lo)), t1 = end(grid.t_frac(window.t_hi), grid.nt());
    const std::size_t x0 = dim == 1 ? first(grid.x_frac(0, window.lo[0])) : 0;
    const std::size_t x1 = dim == 1 ? end(grid.x_frac(0, window.hi[0]), grid.nx(0)) : 1;
    const std::span<const double> v = g.values();

    PbmoReport rep;
    int j = 0;
    while (delta * std::exp2(j) < min_side * (1.0 - 1e-12)) ++j;
    for (;; ++j) {
        const std::size_t ns = std::size_t{1} << j;       // samples per spatial side
        const std::size_t nts = std::size_t{1} << (2 * j);  // samples per time side
        const std::size_t ct = t1 > t0 ? (t1 - t0) / nts : 0;
        const std::size_t cx = dim == 1 ? (x1 > x0 ? (x1 - x0) / ns : 0) : 1;
        if (ct == 0 || cx == 0) break;
        const std::size_t span_x = dim == 1 ? ns : 1;
        std::vector<double> osc(ct * cx);
        parallel_for(ct * cx, [&](std::size_t q) {
            const std::size_t a = t0 + (q / cx) * nts;
            const std::size_t b = x0 + (q % cx) * span_x;
            double sum = 0.0;
            for (std::size_t it = a; it < a + nts; ++it)
                for (std::size_t ix = b; ix < b + span_x; ++ix) sum += v[grid.index(it, ix)];
            const double count = static_cast<double>(nts * span_x);
            const double mean = sum / count;
            double dev = 0.0;
            for (std::size_t it = a; it < a + nts; ++it)
                for (std::size_t ix = b; ix < b + span_x; ++ix) dev += std::abs(v[grid.index(it, ix)] - mean);
            osc[q] = dev / count;
        });
        for (std::size_t q = 0; q < osc.size(); ++q) {
            if (rep.cubes == 0 || osc[q] > rep.value) {
                const std::size_t a = t0 + (q / cx) * nts;
                const std::size_t b = x0 + (q % cx) * span_x;
                Box box{};
                box.dim = dim;
                box.t_lo = grid.box().t_lo + static_cast<double>(a) * grid.time_step();
                box.t_hi = box.t_lo + static_cast<double>(nts) * grid.time_step();
                if (dim == 1) {
                    box.lo[0] = grid.box().lo[0] + static_cast<double>(b) * delta;
                    box.hi[0] = box.lo[0] + static_cast<double>(ns) * delta;
                }
                rep.value = osc[q];
                rep.worst = box;
                rep.worst_side = delta * static_cast<double>(ns);
            }
            ++rep.cubes;
        }
        ++rep.generations;
    }
    if (rep.cubes == 0) throw ResolutionError("pbmo: no dyadic cube of the minimal side fits in the window");
    return rep;
}

double pbmo_norm(const ScalarField& g, Box window, double min_side) { return pbmo_report(g, window, min_side).value; }

double base_ball_measure(int dim, double r) {
    if (dim == 0) return 2.0 * r * r;
    if (dim == 1) return 4.0 * r * r * r / 3.0;
    throw DimensionError("base ball measure: base dimension must be 0 or 1");
}

double gamma_hat(const ScalarField& H, const ParaPoint& center, double r, AffineFamily family) {
    const ParaGrid& grid = H.grid();
    const int dim = grid.dim();
    if (center.dim != dim) throw DimensionError("gamma hat: center dimension differs from the field");
    if (dim > 1) throw DimensionError("gamma hat: base dimension must be 0 or 1");
    const double delta = grid.delta();
    if (r < 2.0 * delta * (1.0 - 1e-12)) throw ResolutionError("gamma hat: radius below 2 delta");
    Box reach{};
    reach.dim = dim;
    reach.t_lo = center.t - r * r;
    reach.t_hi = center.t + r * r;
    if (dim == 1) {
        reach.lo[0] = center.x[0] - r;
        reach.hi[0] = center.x[0] + r;
    }
    if (!inside(reach, grid.box())) throw OutOfWindowError("gamma hat: ball leaves the grid box");

    // Sample rows inside the ball, coordinates scaled to the unit ball.
    const std::size_t it0 = static_cast<std::size_t>(std::max(0.0, std::ceil(grid.t_frac(reach.t_lo) - 1e-12)));
    const std::size_t it1 = std::min(grid.nt() - 1, static_cast<std::size_t>(std::floor(grid.t_frac(reach.t_hi) + 1e-12)));
    const int m = 1 + (dim == 1 ? 1 : 0) + (family == AffineFamily::space_time ? 1 : 0);
    struct Sample {
        double u, v, h;
    };
    std::vector<Sample> pts;
    double hsum = 0.0;
    for (std::size_t it = it0; it <= it1; ++it) {
        const double dt = grid.t_at(it) - center.t;
        const double w = r - std::sqrt(std::abs(dt));
        if (w <= 0.0) continue;
        const double v = dt / (r * r);
        if (dim == 0) {
            const double h = H[grid.index(it)];
            pts.push_back({0.0, v, h});
            hsum += h;
            continue;
        }
        const double lo = grid.x_frac(0, center.x[0] - w), hi = grid.x_frac(0, center.x[0] + w);
        const std::size_t a = static_cast<std::size_t>(std::max(0.0, std::ceil(lo)));
        const double b = std::min(static_cast<double>(grid.nx(0)) - 1.0, std::floor(hi));
        for (std::size_t ix = a; static_cast<double>(ix) <= b; ++ix) {
            const double dx = grid.x_at(0, ix) - center.x[0];
            if (std::abs(dx) >= w) continue;
            const double h = H[grid.index(it, ix)];
            pts.push_back({dx / r, v, h});
            hsum += h;
        }
    }
    if (pts.size() < static_cast<std::size_t>(m) + 1) throw ResolutionError("gamma hat: too few samples in the ball");
    const double mean = hsum / static_cast<double>(pts.size());

    auto basis = [&](const Sample& s, std::array<double, 3>& phi) {
        int k = 0;
        phi[k++] = 1.0;
        if (dim == 1) phi[k++] = s.u;
        if (family == AffineFamily::space_time) phi[k++] = s.v;
    };
    std::array<std::array<double, 3>, 3> a{};
    std::array<double, 3> b{};
    std::array<double, 3> phi{};
    for (const Sample& s : pts) {
        basis(s, phi);
        for (int i = 0; i < m; ++i) {
            b[i] += phi[i] * (s.h - mean);
            for (int k = 0; k < m; ++k) a[i][k] += phi[i] * phi[k];
        }
    }
    std::array<double, 3> coef{};
    solve_small(a, b, m, coef);
    double resid = 0.0;
    for (const Sample& s : pts) {
        basis(s, phi);
        double fit = mean;
        for (int i = 0; i < m; ++i) fit += coef[i] * phi[i];
        resid += (s.h - fit) * (s.h - fit);
    }
    const double cell = std::pow(delta, dim) * grid.time_step();
    const double d = dim + 2;
    return std::sqrt(cell * resid / (std::pow(r, d) * r * r));
}

NuResult carleson_nu(const ScalarField& H, const ParaPoint& center, double rho) {
    const ParaGrid& grid = H.grid();
    const int dim = grid.dim();
    const double delta = grid.delta();
    NuResult res;
    res.r_min = 2.0 * delta;
    std::vector<double> radii;
    for (int k = 0;; ++k) {
        const double r = rho * std::exp2(-(k + 0.5) / 8.0);
        if (r < res.r_min) break;
        radii.push_back(r);
    }
    if (radii.size() < 3) throw ResolutionError("carleson nu: fewer than 3 radius levels above 2 delta");
    res.levels = static_cast<int>(radii.size());

    const double ball = base_ball_measure(dim, rho);
    double nu = 0.0;
    for (double r : radii) {
        const double hx = std::max(delta, std::min(r / 4.0, rho / 8.0));
        const double ht = hx * hx;
        std::vector<ParaPoint> lattice;
        const long jt = static_cast<long>(std::ceil(rho * rho / ht));
        const long jx = dim == 1 ? static_cast<long>(std::ceil(rho / hx)) : 0;
        for (long a = -jt; a <= jt; ++a)
            for (long b = -jx; b <= jx; ++b) {
                ParaPoint p = center;
                p.t = center.t + static_cast<double>(a) * ht;
                if (dim == 1) p.x[0] = center.x[0] + static_cast<double>(b) * hx;
                if (para_dist(p, center) < rho) lattice.push_back(p);
            }
        std::vector<double> g2(lattice.size());
        parallel_for(lattice.size(), [&](std::size_t i) {
            const double g = gamma_hat(H, lattice[i], r);
            g2[i] = g * g;
        });
        double mean = 0.0;
        for (double v : g2) mean += v;
        mean /= static_cast<double>(g2.size());
        nu += mean * ball * std::numbers::ln2 / 8.0;
    }
    res.nu = nu;
    res.ratio = nu / std::pow(rho, dim + 2);
    return res;
}

nlohmann::json to_json(const PbmoReport& r) {
    nlohmann::json lo = {r.worst.t_lo}, hi = {r.worst.t_hi};
    for (int i = 0; i < r.worst.dim; ++i) {
        lo.push_back(r.worst.lo[i]);
        hi.push_back(r.worst.hi[i]);
    }
    return {{"value", r.value},
            {"worst", {{"lo", lo}, {"hi", hi}}},
            {"worst_side", r.worst_side},
            {"cubes", r.cubes},
            {"generations", r.generations}};
}

nlohmann::json to_json(const NuResult& r) {
    return {{"nu", r.nu}, {"ratio", r.ratio}, {"levels", r.levels}, {"r_min", r.r_min}};
}

}  // namespace pcme
