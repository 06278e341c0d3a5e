#pragma once

// Explicit heat solver in the region above (or below) a graph, Caccioppoli
// ratios, beta_Q numbers with their packing sums, and the discrete
// Carleson measure functional of the gradient weighted by the distance
// to E.

#include <array>
#include <cstddef>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcme/corona.hpp"
#include "pcme/pargeo.hpp"
#include "pcme/whitney.hpp"

namespace pcme {

enum class DataKind { constant, linear, quadratic, step };

/// Boundary and initial data, defined on all of (t, X).
///   constant:  value
///   linear:    value * x_1
///   quadratic: |X|^2 / (2n) + t
///   step:      lo + (hi - lo) (1 + tanh((s - center) / width)) / 2 with
///              s = t (axis 0) or s = x_{axis}; axis < 0 picks x_1 when
///              n = 2 and t when n = 1.
struct DataSpec {
    DataKind kind = DataKind::step;
    double value = 1.0;
    double lo = 0.0, hi = 1.0;
    double center = 0.0;
    double width = 0.05;
    int axis = -1;

    double operator()(const ParaPoint& p) const;
};

/// The box in (t, X), X in R^n, and the graph whose side is solved on.
/// Without a boundary graph the whole box is the domain. `E` gives the
/// distance weight; it defaults to the boundary graph.
struct HeatDomain {
    Box box;
    std::shared_ptr<const SampledGraph> boundary;
    int side = 1;  // +1: x_n > graph, -1: x_n < graph
    std::shared_ptr<const SampledGraph> E;
};

struct HeatOptions {
    int substeps = 0;  // per grid time step delta^2; 0 means 4n, fewer than 2n violates CFL; must be even
    bool check_max_principle = true;
};

enum CellFlag : unsigned char {
    kInMask = 1,       // cell center in the domain
    kBoundary = 2,     // mask cell next to the mask edge or the box side; held at the data
    kInterior = 4,     // central differences available in space and time
};

/// Solution sampled at the cell centers of a ParaGrid over (t, X); time
/// samples every delta^2.
class HeatField {
public:
    const ParaGrid& grid() const { return grid_; }
    int n() const { return grid_.dim(); }
    double u(std::size_t i) const { return u_[i]; }
    std::span<const double> values() const { return u_; }
    unsigned char flags(std::size_t i) const { return flags_[i]; }
    bool in_mask(std::size_t i) const { return flags_[i] & kInMask; }
    bool interior(std::size_t i) const { return flags_[i] & kInterior; }
    /// Centered differences; zero off the interior.
    double grad(std::size_t i, int axis) const { return grad_[static_cast<std::size_t>(axis)][i]; }
    double grad_sq(std::size_t i) const;
    double du_dt(std::size_t i) const { return dt_[i]; }
    /// dist(cell center, E); zero when no graph is attached.
    double dist_E(std::size_t i) const { return dist_[i]; }
    bool has_dist() const { return has_dist_; }
    /// sup |u| over the mask.
    double sup_abs() const { return sup_abs_; }
    double data_min() const { return data_min_; }
    double data_max() const { return data_max_; }
    int substeps() const { return substeps_; }
    /// Largest excursion of u beyond the running data bounds over all
    /// substeps (0 when the maximum principle held exactly).
    double max_principle_excess() const { return excess_; }
    const HeatDomain& domain() const { return domain_; }

private:
    friend HeatField solve_heat(const HeatDomain&, const DataSpec&, double, const HeatOptions&);

    ParaGrid grid_;
    HeatDomain domain_;
    std::vector<double> u_;
    std::vector<unsigned char> flags_;
    std::array<std::vector<double>, kMaxSpatial> grad_;
    std::vector<double> dt_;
    std::vector<double> dist_;
    bool has_dist_ = false;
    double sup_abs_ = 0.0;
    double data_min_ = 0.0, data_max_ = 0.0;
    double excess_ = 0.0;
    int substeps_ = 0;
};

/// Forward Euler with `substeps` steps per delta^2 and the standard
/// 2n + 1 point Laplacian. The initial slab and the boundary cells take
/// the data. Throws ParameterError on a CFL violation, ResolutionError for
/// an empty domain and AssertionFailure when the discrete maximum principle
/// fails at some substep.
HeatField solve_heat(const HeatDomain& domain, const DataSpec& data, double delta, const HeatOptions& opt = {});

/// [int_B |grad u|^2] / [r^{-2} int_{(1+alpha)B} u^2] over interior cells.
/// Throws OutOfWindowError when (1 + alpha)B leaves the box or the mask.
double caccioppoli_ratio(const HeatField& field, const ParaBall& ball, double alpha);

struct CmeRow {
    ParaPoint center;
    double r = 0.0;
    double value = 0.0;       // r^{-(n+1)} int_B |grad v|^2 delta
    double value_time = 0.0;  // same plus delta^2 |d_t v|^2 inside the integrand
    std::size_t cells = 0;
};

struct CmeTable {
    std::vector<CmeRow> rows;
    double sup = 0.0;
    double sup_time = 0.0;
};

/// Centers are base points (t, x') lifted onto g. Every ball must lie in
/// the solved box; radii below 8 delta throw ResolutionError.
CmeTable cme_functional(const HeatField& field, const SampledGraph& g, std::span<const ParaPoint> centers,
                        std::span<const double> radii);

/// Sum over the interior cells whose centers lie in the region's Whitney
/// boxes of |grad v|^2 delta times the cell volume. Throws
/// OutOfWindowError when a member box leaves the solved box.
double beta_Q(const HeatField& field, const WhitneyRegion& region, const WhitneyDecomposition& w);

/// int |grad v|^2 delta over all interior cells.
double dirichlet_total(const HeatField& field);

struct PackingResult {
    int q0 = -1;
    double sigma = 0.0;        // sigma(Q0)
    double total = 0.0;        // sum of beta_Q over Q in D_{Q0}
    double bad = 0.0;          // bad cubes of D_{Q0}
    double regimes = 0.0;      // regimes with maximal cube strictly inside Q0
    double tail = 0.0;         // the regime of Q0 restricted to D_{Q0}
    double ratio = 0.0;        // total / sigma
    double max_beta_ratio = 0.0;  // A: max beta_Q / sigma(Q) over D_{Q0}
};

/// beta_Q of every cube of the tree for the given Whitney decomposition.
std::vector<double> beta_all(const HeatField& field, const CubeTree& tree, const WhitneyDecomposition& w,
                             double eta);

/// sum_{Q in D_{Q0}} beta_Q / sigma(Q0), split by the corona parts.
PackingResult packing_sum(const CoronaInput& corona, int q0, std::span<const double> betas);

void write_cme_csv(std::ostream& out, const CmeTable& table);
void write_beta_csv(std::ostream& out, const CubeTree& tree, std::span<const double> betas);

nlohmann::json to_json(const CmeTable& t);
nlohmann::json to_json(const PackingResult& p);

}  // namespace pcme
