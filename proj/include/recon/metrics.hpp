#pragma once

#include "recon/grid.hpp"
#include "recon/kdtree.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace recon {

/// Per-voxel confusion tallies of a prediction against a reference.
struct ConfusionCounts {
    std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
    std::uint64_t total() const { return tp + tn + fp + fn; }
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

inline ConfusionCounts confusion_counts(const BinaryMask& pred, const BinaryMask& ref) {
    if (!(pred.geometry() == ref.geometry())) {
        throw Error("confusion counts need masks on an identical grid; align the voxel grids first");
    }
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != 0, r = ref[i] != 0;
        if (p && r) ++c.tp;
        else if (p) ++c.fp;
        else if (r) ++c.fn;
        else ++c.tn;
    }
    return c;
}

namespace detail {

inline Ratio ratio(double num, double den) {
    if (den == 0.0) return std::nullopt;
    return num / den;
}

}  // namespace detail

/// True positive rate tp / (tp + fn).
inline Ratio sensitivity(const ConfusionCounts& c) {
    return detail::ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
}

/// True negative rate tn / (tn + fp).
inline Ratio specificity(const ConfusionCounts& c) {
    return detail::ratio(static_cast<double>(c.tn), static_cast<double>(c.tn + c.fp));
}

/// Positive predictive value tp / (tp + fp).
inline Ratio precision(const ConfusionCounts& c) {
    return detail::ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
}

inline Ratio dice(const ConfusionCounts& c) {
    return detail::ratio(2.0 * static_cast<double>(c.tp), static_cast<double>(2 * c.tp + c.fp + c.fn));
}

inline Ratio jaccard(const ConfusionCounts& c) {
    return detail::ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp + c.fn));
}

/// 1 - |fn - fp| / (2 tp + fp + fn), written as one division so the result is
/// the correctly rounded quotient of two integers.
inline Ratio volume_similarity(const ConfusionCounts& c) {
    const std::uint64_t den = 2 * c.tp + c.fp + c.fn;
    return detail::ratio(static_cast<double>(2 * c.tp + 2 * std::min(c.fp, c.fn)), static_cast<double>(den));
}

struct VoxelMetrics {
    ConfusionCounts counts;
    Ratio sensitivity, specificity, precision, dice, jaccard, volume_similarity;
};

inline VoxelMetrics voxel_metrics(const ConfusionCounts& c) {
    return {c, sensitivity(c), specificity(c), precision(c), dice(c), jaccard(c), volume_similarity(c)};
}

inline VoxelMetrics voxel_metrics(const BinaryMask& pred, const BinaryMask& ref) {
    return voxel_metrics(confusion_counts(pred, ref));
}

// ---------------------------------------------------------------------------
// Surface metrics

/// Distance from each point of `a` to its nearest point of `b` (exact, via k-d tree).
inline std::vector<double> nn_distances(std::span<const Vec3> a, std::span<const Vec3> b) {
    if (a.empty() || b.empty()) throw Error("nearest-neighbor distances need non-empty point sets");
    const auto tree = make_kdtree(b);
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = std::sqrt(tree.nearest(to_point(a[i])).dist2);
    return d;
}

struct ChamferDistance {
    double squared_mm2 = 0.0;    // mean squared NN distance a->b plus b->a
    double unsquared_mm = 0.0;   // same with plain distances
};

inline ChamferDistance chamfer(std::span<const Vec3> a, std::span<const Vec3> b) {
    const auto ab = nn_distances(a, b);
    const auto ba = nn_distances(b, a);
    auto mean = [](const std::vector<double>& v, bool squared) {
        double s = 0.0;
        for (double x : v) s += squared ? x * x : x;
        return s / static_cast<double>(v.size());
    };
    return {mean(ab, true) + mean(ba, true), mean(ab, false) + mean(ba, false)};
}

/// Symmetric average Hausdorff: mean of the two directed mean NN distances.
inline double average_hausdorff(std::span<const Vec3> a, std::span<const Vec3> b) {
    const auto ab = nn_distances(a, b);
    const auto ba = nn_distances(b, a);
    double sa = 0.0, sb = 0.0;
    for (double x : ab) sa += x;
    for (double x : ba) sb += x;
    return 0.5 * (sa / static_cast<double>(ab.size()) + sb / static_cast<double>(ba.size()));
}

/// Directed RMS of NN distances from each reconstructed point to the reference.
inline double rmse_surface(std::span<const Vec3> recon, std::span<const Vec3> ref) {
    const auto d = nn_distances(recon, ref);
    double s = 0.0;
    for (double x : d) s += x * x;
    return std::sqrt(s / static_cast<double>(d.size()));
}

struct SurfaceMetrics {
    double chamfer_sq_mm2 = 0.0;
    double chamfer_mm = 0.0;
    double ahd_mm = 0.0;
    double rmse_mm = 0.0;
};

inline SurfaceMetrics surface_metrics(std::span<const Vec3> recon, std::span<const Vec3> ref) {
    const auto cd = chamfer(recon, ref);
    return {cd.squared_mm2, cd.unsquared_mm, average_hausdorff(recon, ref), rmse_surface(recon, ref)};
}

}  // namespace recon
