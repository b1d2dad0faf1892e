#pragma once

#include "recon/core.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <utility>
#include <vector>

namespace recon {

/// Exact k-d tree over points in R^Dim. Immutable after construction.
/// Equal distances are ordered by point index, so every query is deterministic.
template <int Dim>
class KdTree {
public:
    using Point = std::array<double, Dim>;

    struct Neighbor {
        std::size_t index;
        double dist2;
        friend bool operator<(const Neighbor& a, const Neighbor& b) {
            return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
        }
    };

    KdTree() = default;
    explicit KdTree(std::vector<Point> points) : points_(std::move(points)) {
        order_.resize(points_.size());
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        if (!points_.empty()) build(0, points_.size());
    }

    std::size_t size() const { return points_.size(); }
    bool empty() const { return points_.empty(); }
    const Point& point(std::size_t i) const { return points_[i]; }

    Neighbor nearest(const Point& q) const {
        if (points_.empty()) throw Error("nearest-neighbor query on an empty index");
        Neighbor best{std::numeric_limits<std::size_t>::max(), std::numeric_limits<double>::infinity()};
        nearest_rec(0, q, best);
        return best;
    }

    /// The k closest points, ascending.
    std::vector<Neighbor> knn(const Point& q, std::size_t k) const {
        std::vector<Neighbor> heap;  // max-heap on (dist2, index)
        if (k == 0 || points_.empty()) return heap;
        heap.reserve(k + 1);
        knn_rec(0, q, k, heap);
        std::sort_heap(heap.begin(), heap.end());
        return heap;
    }

    /// All points with squared distance <= r^2, ascending.
    std::vector<Neighbor> radius(const Point& q, double r) const {
        std::vector<Neighbor> out;
        if (points_.empty()) return out;
        radius_rec(0, q, r * r, out);
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    struct Node {
        std::size_t begin = 0, end = 0;  // range in order_
        int axis = -1;                   // -1 marks a leaf
        double split = 0.0;
        std::size_t left = 0, right = 0;
    };

    static constexpr std::size_t kLeafSize = 8;

    static double dist2(const Point& a, const Point& b) {
        double s = 0.0;
        for (int d = 0; d < Dim; ++d) {
            const double t = a[d] - b[d];
            s += t * t;
        }
        return s;
    }

    std::size_t build(std::size_t begin, std::size_t end) {
        const std::size_t id = nodes_.size();
        nodes_.push_back({begin, end});
        if (end - begin <= kLeafSize) return id;
        Point lo, hi;
        lo.fill(std::numeric_limits<double>::infinity());
        hi.fill(-std::numeric_limits<double>::infinity());
        for (std::size_t i = begin; i < end; ++i) {
            const auto& p = points_[order_[i]];
            for (int d = 0; d < Dim; ++d) {
                lo[d] = std::min(lo[d], p[d]);
                hi[d] = std::max(hi[d], p[d]);
            }
        }
        int axis = 0;
        for (int d = 1; d < Dim; ++d) {
            if (hi[d] - lo[d] > hi[axis] - lo[axis]) axis = d;
        }
        if (hi[axis] == lo[axis]) return id;  // all coincident
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                         order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                             return points_[a][axis] < points_[b][axis];
                         });
        const double split = points_[order_[mid]][axis];
        const std::size_t l = build(begin, mid);
        const std::size_t r = build(mid, end);
        nodes_[id].axis = axis;
        nodes_[id].split = split;
        nodes_[id].left = l;
        nodes_[id].right = r;
        return id;
    }

    // Left subtree holds coordinates <= split, right subtree >= split.
    void nearest_rec(std::size_t id, const Point& q, Neighbor& best) const {
        const Node& n = nodes_[id];
        if (n.axis < 0) {
            for (std::size_t i = n.begin; i < n.end; ++i) {
                const Neighbor c{order_[i], dist2(points_[order_[i]], q)};
                if (c < best) best = c;
            }
            return;
        }
        const double diff = q[n.axis] - n.split;
        const std::size_t first = diff <= 0 ? n.left : n.right;
        const std::size_t second = diff <= 0 ? n.right : n.left;
        nearest_rec(first, q, best);
        if (diff * diff <= best.dist2) nearest_rec(second, q, best);
    }

    void knn_rec(std::size_t id, const Point& q, std::size_t k, std::vector<Neighbor>& heap) const {
        const Node& n = nodes_[id];
        if (n.axis < 0) {
            for (std::size_t i = n.begin; i < n.end; ++i) {
                const Neighbor c{order_[i], dist2(points_[order_[i]], q)};
                if (heap.size() < k) {
                    heap.push_back(c);
                    std::push_heap(heap.begin(), heap.end());
                } else if (c < heap.front()) {
                    std::pop_heap(heap.begin(), heap.end());
                    heap.back() = c;
                    std::push_heap(heap.begin(), heap.end());
                }
            }
            return;
        }
        const double diff = q[n.axis] - n.split;
        const std::size_t first = diff <= 0 ? n.left : n.right;
        const std::size_t second = diff <= 0 ? n.right : n.left;
        knn_rec(first, q, k, heap);
        if (heap.size() < k || diff * diff <= heap.front().dist2) knn_rec(second, q, k, heap);
    }

    void radius_rec(std::size_t id, const Point& q, double r2, std::vector<Neighbor>& out) const {
        const Node& n = nodes_[id];
        if (n.axis < 0) {
            for (std::size_t i = n.begin; i < n.end; ++i) {
                const double d2 = dist2(points_[order_[i]], q);
                if (d2 <= r2) out.push_back({order_[i], d2});
            }
            return;
        }
        const double diff = q[n.axis] - n.split;
        if (diff <= 0 || diff * diff <= r2) radius_rec(n.left, q, r2, out);
        if (diff >= 0 || diff * diff <= r2) radius_rec(n.right, q, r2, out);
    }

    std::vector<Point> points_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
};

using KdTree3 = KdTree<3>;

inline KdTree3::Point to_point(const Vec3& v) { return {v[0], v[1], v[2]}; }

inline KdTree3 make_kdtree(std::span<const Vec3> pts) {
    std::vector<KdTree3::Point> p;
    p.reserve(pts.size());
    for (const auto& v : pts) p.push_back(to_point(v));
    return KdTree3(std::move(p));
}

}  // namespace recon
