#include "pcme/boxindex.hpp"

#include <algorithm>
#include <cmath>

namespace pcme {

namespace {

constexpr std::size_t kLeaf = 8;

Box hull(const Box& a, const Box& b) {
    Box h = a;
    h.t_lo = std::min(a.t_lo, b.t_lo);
    h.t_hi = std::max(a.t_hi, b.t_hi);
    for (int i = 0; i < a.dim; ++i) {
        h.lo[i] = std::min(a.lo[i], b.lo[i]);
        h.hi[i] = std::max(a.hi[i], b.hi[i]);
    }
    return h;
}

double center_along(const Box& b, int axis) {
    return axis < 0 ? 0.5 * (b.t_lo + b.t_hi) : 0.5 * (b.lo[axis] + b.hi[axis]);
}

}  // namespace

bool closed_contains(const Box& b, const ParaPoint& p) {
    if (p.t < b.t_lo || p.t > b.t_hi) return false;
    for (int i = 0; i < b.dim; ++i)
        if (p.x[i] < b.lo[i] || p.x[i] > b.hi[i]) return false;
    return true;
}

bool closed_meet(const Box& a, const Box& b) {
    if (a.t_hi < b.t_lo || b.t_hi < a.t_lo) return false;
    for (int i = 0; i < a.dim; ++i)
        if (a.hi[i] < b.lo[i] || b.hi[i] < a.lo[i]) return false;
    return true;
}

BoxIndex::BoxIndex(std::vector<Box> boxes, std::vector<double> weights)
    : boxes_(std::move(boxes)), weights_(std::move(weights)) {
    if (weights_.empty()) weights_.assign(boxes_.size(), 0.0);
    order_.resize(boxes_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    if (!boxes_.empty()) build(0, boxes_.size());
}

int BoxIndex::build(std::size_t begin, std::size_t end) {
    Box bounds = boxes_[order_[begin]];
    double w_lo = weights_[order_[begin]], w_hi = w_lo;
    for (std::size_t i = begin + 1; i < end; ++i) {
        bounds = hull(bounds, boxes_[order_[i]]);
        w_lo = std::min(w_lo, weights_[order_[i]]);
        w_hi = std::max(w_hi, weights_[order_[i]]);
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({bounds, w_lo, w_hi, begin, end, -1, -1});
    if (end - begin <= kLeaf) return id;
    // split along the axis of larger parabolic extent
    int axis = -1;
    double extent = std::sqrt(bounds.t_hi - bounds.t_lo);
    for (int i = 0; i < bounds.dim; ++i)
        if (bounds.hi[i] - bounds.lo[i] > extent) {
            extent = bounds.hi[i] - bounds.lo[i];
            axis = i;
        }
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                         return center_along(boxes_[a], axis) < center_along(boxes_[b], axis);
                     });
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[static_cast<std::size_t>(id)].left = left;
    nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
}

template <class Hit, class Leaf>
void BoxIndex::walk(const Hit& hit, const Leaf& leaf) const {
    if (nodes_.empty()) return;
    int stack[128];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const Node& node = nodes_[static_cast<std::size_t>(stack[--top])];
        if (!hit(node)) continue;
        if (node.left < 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) leaf(order_[i]);
        } else {
            stack[top++] = node.left;
            stack[top++] = node.right;
        }
    }
}

void BoxIndex::containing(const ParaPoint& p, std::vector<std::size_t>& out) const {
    out.clear();
    walk([&](const Node& n) { return closed_contains(n.bounds, p); },
         [&](std::size_t i) {
             if (closed_contains(boxes_[i], p)) out.push_back(i);
         });
}

void BoxIndex::meeting(const Box& q, std::vector<std::size_t>& out) const {
    out.clear();
    walk([&](const Node& n) { return closed_meet(n.bounds, q); },
         [&](std::size_t i) {
             if (closed_meet(boxes_[i], q)) out.push_back(i);
         });
}

void BoxIndex::meeting_outside(const Box& q, double lo, double hi, std::vector<std::size_t>& out) const {
    out.clear();
    walk([&](const Node& n) { return (n.w_lo < lo || n.w_hi > hi) && closed_meet(n.bounds, q); },
         [&](std::size_t i) {
             if ((weights_[i] < lo || weights_[i] > hi) && closed_meet(boxes_[i], q)) out.push_back(i);
         });
}

}  // namespace pcme
