#pragma once

// Parabolic space-time geometry: points, balls, sampling grids, scalar
// fields over grids and graphs of Lip(1/2,1) functions.
//
// Coordinates are (t, X). Time carries units of length squared, so the
// parabolic distance is |X - Y| + |t - s|^{1/2}. A graph over R^n = (t, x')
// lives in R^{n+1} = (t, x', x_n); its base points have n - 1 spatial
// coordinates and its graph points have n.

#include <array>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pcme {

inline constexpr int kMaxSpatial = 2;

struct ParaPoint {
    double t = 0.0;
    std::array<double, kMaxSpatial> x{};
    int dim = 0;  // number of spatial coordinates in use

    ParaPoint() = default;
    ParaPoint(double time, std::initializer_list<double> space);

    bool operator==(const ParaPoint&) const = default;
};

/// |X - Y| + |t - s|^{1/2}. Throws DimensionError when dims differ.
double para_dist(const ParaPoint& p, const ParaPoint& q);

struct ParaBall {
    ParaPoint center;
    double radius = 0.0;

    bool contains(const ParaPoint& p) const { return para_dist(center, p) < radius; }
};

/// Axis-aligned box in (t, X). Half-open on the upper faces for sample
/// membership.
struct Box {
    double t_lo = 0.0;
    double t_hi = 0.0;
    std::array<double, kMaxSpatial> lo{};
    std::array<double, kMaxSpatial> hi{};
    int dim = 0;

    double volume() const;
    bool contains(const ParaPoint& p) const;
    ParaPoint center() const;
    /// Parabolic diameter: Euclidean spatial diagonal plus sqrt(time side).
    double para_diam() const;
};

/// Parabolic distance between a point and a box (exact; the time and space
/// terms separate).
double para_dist(const ParaPoint& p, const Box& b);
/// Parabolic distance between two boxes.
double para_dist(const Box& a, const Box& b);

/// Cell-centered sampling grid with spatial step delta and time step
/// delta^2. Samples sit at lo + (i + 1/2) * step along each axis and are
/// stored row-major over (t, x_1, x_2).
class ParaGrid {
public:
    ParaGrid() = default;
    ParaGrid(const Box& box, double delta);

    int dim() const { return box_.dim; }
    double delta() const { return delta_; }
    double time_step() const { return delta_ * delta_; }
    const Box& box() const { return box_; }

    std::size_t nt() const { return nt_; }
    std::size_t nx(int axis) const { return nx_[axis]; }
    std::size_t size() const { return size_; }

    double t_at(std::size_t it) const { return box_.t_lo + (static_cast<double>(it) + 0.5) * time_step(); }
    double x_at(int axis, std::size_t ix) const {
        return box_.lo[axis] + (static_cast<double>(ix) + 0.5) * delta_;
    }

    std::size_t index(std::size_t it, std::size_t ix0 = 0, std::size_t ix1 = 0) const {
        return (it * nx_[0] + ix0) * nx_[1] + ix1;
    }
    std::array<std::size_t, 3> unravel(std::size_t i) const;
    ParaPoint point(std::size_t i) const;

    /// Lebesgue volume represented by one sample: delta^{dim+2}.
    double cell_volume() const;

    /// Fractional sample coordinates of a point (sample i sits at i).
    double t_frac(double t) const { return (t - box_.t_lo) / time_step() - 0.5; }
    double x_frac(int axis, double x) const { return (x - box_.lo[axis]) / delta_ - 0.5; }

    /// Maximal parabolic distance from any point of the box to its nearest sample.
    double covering_radius() const;

    bool operator==(const ParaGrid& o) const { return box_.t_lo == o.box_.t_lo && box_.t_hi == o.box_.t_hi &&
                                                      box_.lo == o.box_.lo && box_.hi == o.box_.hi &&
                                                      box_.dim == o.box_.dim && delta_ == o.delta_; }

private:
    Box box_{};
    double delta_ = 0.0;
    std::size_t nt_ = 0;
    std::array<std::size_t, kMaxSpatial> nx_{1, 1};
    std::size_t size_ = 0;
};

using ClosedForm = std::function<double(const ParaPoint&)>;

/// Scalar field sampled on a grid, with an optional closed form for
/// off-grid evaluation. Otherwise evaluation is multilinear in sample
/// index space (time axis effectively scaled by delta^2), clamped at the
/// box edges.
class ScalarField {
public:
    ScalarField() = default;
    ScalarField(ParaGrid grid, std::vector<double> values, ClosedForm closed_form = {});
    ScalarField(ParaGrid grid, std::shared_ptr<const std::vector<double>> values, ClosedForm closed_form = {});
    /// Samples a closed form on the grid and keeps it for off-grid queries.
    static ScalarField sample(const ParaGrid& grid, ClosedForm closed_form);

    const ParaGrid& grid() const { return grid_; }
    std::span<const double> values() const { return *values_; }
    const std::shared_ptr<const std::vector<double>>& shared_values() const { return values_; }
    double operator[](std::size_t i) const { return (*values_)[i]; }
    bool has_closed_form() const { return static_cast<bool>(closed_form_); }

    double eval(const ParaPoint& base) const;
    double interpolate(const ParaPoint& base) const;

private:
    ParaGrid grid_;
    std::shared_ptr<const std::vector<double>> values_;
    ClosedForm closed_form_;
};

/// Sampled Lip(1/2,1) quotient sup |g(p) - g(q)| / para_dist(p, q) over
/// multi-scale axis and diagonal offsets plus random pairs.
double lip_half_one(const ScalarField& field, std::size_t random_pairs = 20000, unsigned seed = 7);

/// Rectangular sample index range over a base grid: [t0, t1) x [x0, x1).
struct IndexRange {
    std::size_t t0 = 0, t1 = 0, x0 = 0, x1 = 1;

    bool empty() const { return t0 >= t1 || x0 >= x1; }
    std::size_t count() const { return empty() ? 0 : (t1 - t0) * (x1 - x0); }
    IndexRange intersect(const IndexRange& o) const;
};

struct NearestSample {
    double dist = 0.0;
    std::size_t index = 0;
    bool found = false;
};

/// Bounding-volume hierarchy over the samples of a graph. Nodes are
/// rectangular index ranges with (t, x', x_n) bounds.
class GraphIndex {
public:
    GraphIndex(const ParaGrid& base, std::shared_ptr<const std::vector<double>> values);

    /// Nearest graph sample to p, restricted to `range`; samples at
    /// distance >= cutoff are ignored.
    NearestSample nearest(const ParaPoint& p, const IndexRange& range, double cutoff) const;
    /// Minimal parabolic distance from a box in R^{n+1} to graph samples in range.
    double box_distance(const Box& box, const IndexRange& range, double cutoff) const;

    IndexRange full_range() const;
    /// Bounding box (t, x', x_n) of the graph samples in a range.
    Box bounds(const IndexRange& range) const;

private:
    struct Node {
        IndexRange range;
        Box bounds;
        int left = -1;
        int right = -1;
    };
    int build(const IndexRange& r);
    Box leaf_bounds(const IndexRange& r) const;
    ParaPoint graph_point(std::size_t i) const;
    template <class LowerBound, class Exact>
    void descend(int node, const IndexRange& range, double& best, std::size_t& best_index, bool& found,
                 const LowerBound& lower, const Exact& exact) const;

    ParaGrid base_;
    std::shared_ptr<const std::vector<double>> values_;
    std::vector<Node> nodes_;
};

/// Graph of a Lip(1/2,1) function f over R^n = (t, x'), embedded in
/// R^{n+1}. Immutable.
class SampledGraph {
public:
    SampledGraph(int n, ScalarField f, double b1, double b2, std::string label = {});

    int n() const { return n_; }
    const ParaGrid& grid() const { return f_.grid(); }
    const ScalarField& field() const { return f_; }
    std::span<const double> values() const { return f_.values(); }
    double b1() const { return b1_; }
    double b2() const { return b2_; }
    const std::string& label() const { return label_; }
    const GraphIndex& index() const { return *index_; }

    double eval(const ParaPoint& base) const { return f_.eval(base); }
    /// F(t, x') = (t, x', f(t, x')).
    ParaPoint lift(const ParaPoint& base) const;
    ParaPoint sample_point(std::size_t i) const;
    /// Base point (t, x') of a point in R^{n+1}.
    ParaPoint project(const ParaPoint& p) const;
    /// Signed vertical offset x_n - f(t, x').
    double vertical_offset(const ParaPoint& p) const;
    /// Distance between the sampled set and the continuous graph is at most this.
    double sampling_radius() const;

private:
    int n_;
    ScalarField f_;
    double b1_;
    double b2_;
    std::string label_;
    std::shared_ptr<const GraphIndex> index_;
};

struct GraphDistance {
    double dist = 0.0;
    double vertical = 0.0;    // |x_n - f(t, x')|
    ParaPoint foot;           // base point of the minimizer
};

/// Parabolic distance from p in R^{n+1} to the graph. Minimizes over the
/// graph samples and the vertical projection point. Throws
/// OutOfWindowError when the base of p lies outside the graph box enlarged
/// by `margin`.
GraphDistance dist_to_graph(const ParaPoint& p, const SampledGraph& g, double margin = 0.0);

/// Projected (t, x')-Lebesgue measure of {(t, x') : F(t, x') in ball},
/// summed over the samples inside the graph box.
double surface_measure(const SampledGraph& g, const ParaBall& ball);

struct AdrReport {
    double min_ratio = 0.0;
    double max_ratio = 0.0;
    std::size_t samples = 0;
};

/// min / max over (center, radius) of sigma(B cap graph) / r^{n+1}. Every
/// ball footprint must lie in the graph box and radii must be >= 4 delta.
AdrReport adr_check(const SampledGraph& g, std::span<const ParaPoint> centers, std::span<const double> radii);

// ---- graph fixtures ------------------------------------------------------

struct GraphSpec {
    int n = 1;
    double delta = 1.0 / 64;
    Box box;  // base box over (t, x'), dim = n - 1
    std::string kind = "flat";  // flat | sine | multiscale | table
    double height = 0.0;        // flat
    double amp_x = 0.0, k_x = 0.0, amp_t = 0.0, k_t = 0.0;  // sine
    int levels = 4;             // multiscale
    std::vector<double> table;  // row-major over (t, x')
    double b2 = 0.0;            // declared P-BMO bound of D_t^{1/2} f

    bool operator==(const GraphSpec&) const = default;
};

/// Builds a graph from a spec; b1 is measured with lip_half_one.
SampledGraph make_graph(const GraphSpec& spec);

/// Convenience base boxes: t in [t_lo, t_hi], x' in [x_lo, x_hi] when n == 2.
Box base_box(int n, double t_lo, double t_hi, double x_lo = 0.0, double x_hi = 0.0);

}  // namespace pcme
