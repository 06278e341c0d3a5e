#pragma once

// Static bounding-box hierarchy over a list of boxes in (t, X).

#include <cstddef>
#include <vector>

#include "pcme/pargeo.hpp"

namespace pcme {

class BoxIndex {
public:
    BoxIndex() = default;
    explicit BoxIndex(std::vector<Box> boxes, std::vector<double> weights = {});

    std::size_t size() const { return boxes_.size(); }
    const Box& box(std::size_t i) const { return boxes_[i]; }

    /// Boxes containing p, closed on every face.
    void containing(const ParaPoint& p, std::vector<std::size_t>& out) const;
    /// Boxes meeting q, closed on every face.
    void meeting(const Box& q, std::vector<std::size_t>& out) const;
    /// Boxes meeting q whose weight lies outside [lo, hi]; subtrees with all
    /// weights inside the band are skipped.
    void meeting_outside(const Box& q, double lo, double hi, std::vector<std::size_t>& out) const;

private:
    struct Node {
        Box bounds;
        double w_lo = 0.0, w_hi = 0.0;
        std::size_t begin = 0, end = 0;  // into order_ for leaves
        int left = -1, right = -1;
    };
    int build(std::size_t begin, std::size_t end);
    template <class Hit, class Leaf>
    void walk(const Hit& hit, const Leaf& leaf) const;

    std::vector<Box> boxes_;
    std::vector<double> weights_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
};

/// Closed-box tests.
bool closed_contains(const Box& b, const ParaPoint& p);
bool closed_meet(const Box& a, const Box& b);

}  // namespace pcme
