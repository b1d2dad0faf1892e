#pragma once

#include "recon/grid.hpp"
#include "recon/rigid.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace recon {

/// Extremal foreground points along the three principal directions.
/// points[2a] attains the minimum projection on axes[a], points[2a + 1] the maximum.
struct LandmarkSet {
    std::array<Vec3, 6> points;
    std::array<Vec3, 3> axes;
    std::array<double, 3> eigenvalues{};  // descending
    Vec3 centroid = Vec3::Zero();
    bool isotropic_fallback = false;  // eigenvalue tie: grid axes were used
};

/// Relative eigenvalue gap below which principal directions are treated as tied.
inline constexpr double kEigenTieGap = 1e-6;

namespace detail {

inline void apply_sign_rule(Vec3& axis) {
    int big = 0;
    for (int d = 1; d < 3; ++d) {
        if (std::abs(axis[d]) > std::abs(axis[big])) big = d;
    }
    if (axis[big] < 0) axis = -axis;
}

}  // namespace detail

/// PCA landmarks of a point set (typically foreground voxel centers, in mm).
inline LandmarkSet pca_landmarks(std::span<const Vec3> pts) {
    if (pts.size() < 4) {
        throw Error("PCA landmarks need at least 4 non-coplanar points; got " + std::to_string(pts.size()) +
                    " (rank " + std::to_string(pts.empty() ? 0 : pts.size() - 1) + ")");
    }
    LandmarkSet out;
    Vec3 c = Vec3::Zero();
    for (const auto& p : pts) c += p;
    c /= static_cast<double>(pts.size());
    out.centroid = c;
    Mat3 cov = Mat3::Zero();
    for (const auto& p : pts) {
        const Vec3 d = p - c;
        cov += d * d.transpose();
    }
    cov /= static_cast<double>(pts.size());

    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    const Vec3 ev = es.eigenvalues();  // ascending
    const double top = ev[2];
    int rank = 0;
    for (int i = 0; i < 3; ++i) rank += ev[i] > 1e-12 * std::max(top, 1e-300);
    if (top <= 0.0) rank = 0;
    if (rank < 3) {
        throw Error("PCA landmarks need a full-rank (non-coplanar) foreground; covariance rank is " +
                    std::to_string(rank));
    }
    for (int a = 0; a < 3; ++a) {
        out.eigenvalues[a] = ev[2 - a];
        out.axes[a] = es.eigenvectors().col(2 - a);
    }
    const bool tied = (out.eigenvalues[0] - out.eigenvalues[1]) < kEigenTieGap * top ||
                      (out.eigenvalues[1] - out.eigenvalues[2]) < kEigenTieGap * top;
    if (tied) {
        out.isotropic_fallback = true;
        // Grid axes by descending variance; near-equal variances keep x, y, z order.
        std::array<int, 3> order{0, 1, 2};
        const double tol = kEigenTieGap * top;
        for (int pass = 0; pass < 2; ++pass) {
            for (int a = 0; a < 2; ++a) {
                if (cov(order[a + 1], order[a + 1]) > cov(order[a], order[a]) + tol) std::swap(order[a], order[a + 1]);
            }
        }
        for (int a = 0; a < 3; ++a) out.axes[a] = Vec3::Unit(order[a]);
    }
    for (auto& ax : out.axes) detail::apply_sign_rule(ax);
    if (out.axes[0].cross(out.axes[1]).dot(out.axes[2]) < 0) out.axes[2] = -out.axes[2];

    double extent = 0.0;
    for (const auto& p : pts) extent = std::max(extent, (p - c).norm());
    const double tie_tol = 1e-9 * std::max(1.0, extent);
    for (int a = 0; a < 3; ++a) {
        const Vec3& ax = out.axes[a];
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& p : pts) {
            const double s = (p - c).dot(ax);
            lo = std::min(lo, s);
            hi = std::max(hi, s);
        }
        // Among (near-)tied extremal points, keep the one closest to the axis line, then the first.
        auto pick = [&](double target) {
            std::size_t best = pts.size();
            double best_perp = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < pts.size(); ++i) {
                const Vec3 d = pts[i] - c;
                const double s = d.dot(ax);
                if (std::abs(s - target) > tie_tol) continue;
                const double perp = (d - s * ax).squaredNorm();
                if (perp < best_perp) {
                    best_perp = perp;
                    best = i;
                }
            }
            return pts[best];
        };
        out.points[2 * a] = pick(lo);
        out.points[2 * a + 1] = pick(hi);
    }
    return out;
}

inline LandmarkSet pca_landmarks(const BinaryMask& mask) {
    const auto pts = foreground_centers(mask);
    return pca_landmarks(std::span<const Vec3>(pts));
}

namespace detail {

/// Kabsch with Umeyama's determinant correction; empty when either set is collinear.
inline std::optional<RigidTransform> try_kabsch(std::span<const Vec3> src, std::span<const Vec3> dst) {
    const auto n = static_cast<double>(src.size());
    Vec3 ms = Vec3::Zero(), md = Vec3::Zero();
    for (std::size_t i = 0; i < src.size(); ++i) {
        ms += src[i];
        md += dst[i];
    }
    ms /= n;
    md /= n;
    Mat3 h = Mat3::Zero(), ss = Mat3::Zero(), dd = Mat3::Zero();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const Vec3 a = src[i] - ms, b = dst[i] - md;
        h += a * b.transpose();
        ss += a * a.transpose();
        dd += b * b.transpose();
    }
    auto collinear = [](const Mat3& m) {
        Eigen::SelfAdjointEigenSolver<Mat3> es(m, Eigen::EigenvaluesOnly);
        const Vec3 ev = es.eigenvalues();
        return ev[2] <= 0.0 || ev[1] <= 1e-12 * ev[2];
    };
    if (collinear(ss) || collinear(dd)) return std::nullopt;
    Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Mat3 u = svd.matrixU(), v = svd.matrixV();
    Mat3 d = Mat3::Identity();
    if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;
    RigidTransform t;
    t.rotation = v * d * u.transpose();
    t.translation = md - t.rotation * ms;
    return t;
}

}  // namespace detail

/// Least-squares proper rigid motion mapping src[i] onto dst[i] (Kabsch with
/// Umeyama's determinant correction, scale fixed at 1).
inline RigidTransform kabsch_umeyama(std::span<const Vec3> src, std::span<const Vec3> dst) {
    if (src.size() != dst.size()) throw Error("Kabsch-Umeyama needs equally sized point sets");
    if (src.size() < 3) throw Error("Kabsch-Umeyama needs at least 3 correspondences");
    auto t = detail::try_kabsch(src, dst);
    if (!t) throw Error("Kabsch-Umeyama landmark set is degenerate (collinear)");
    return *t;
}

inline RigidTransform kabsch_umeyama(const LandmarkSet& src, const LandmarkSet& dst) {
    return kabsch_umeyama(std::span<const Vec3>(src.points), std::span<const Vec3>(dst.points));
}

/// Nearest-neighbor resampling: output voxel at world p is foreground iff
/// T^-1(p) rounds to a foreground input voxel. Out-of-grid samples are background.
inline BinaryMask apply_rigid_to_mask(const BinaryMask& mask, const RigidTransform& t,
                                      const GridGeometry& target) {
    const RigidTransform inv = invert(t);
    const auto& src = mask.geometry();
    BinaryMask out(target, 0);
    for (std::int64_t k = 0; k < target.dims[2]; ++k) {
        for (std::int64_t j = 0; j < target.dims[1]; ++j) {
            for (std::int64_t i = 0; i < target.dims[0]; ++i) {
                const Index3 s = src.nearest_index(inv(target.world({i, j, k})));
                if (src.contains(s) && mask.at(s)) out.at({i, j, k}) = 1;
            }
        }
    }
    return out;
}

struct MaskAlignment {
    BinaryMask aligned;         // moving mask resampled onto the fixed geometry
    RigidTransform coarse;      // supplied pre-alignment
    RigidTransform fine;        // Kabsch-Umeyama on PCA landmarks
    RigidTransform total;       // fine o coarse
    LandmarkSet moving_landmarks;  // after coarse alignment
    LandmarkSet fixed_landmarks;
};

/// Coarse pre-alignment, PCA landmarks of both foregrounds, Kabsch-Umeyama, and a
/// single nearest-neighbor resampling of the moving mask onto the fixed grid.
inline MaskAlignment align_masks(const BinaryMask& moving, const BinaryMask& fixed, const RigidTransform& coarse) {
    MaskAlignment r;
    r.coarse = coarse;
    auto moved = foreground_centers(moving);
    for (auto& p : moved) p = coarse(p);
    r.moving_landmarks = pca_landmarks(std::span<const Vec3>(moved));
    r.fixed_landmarks = pca_landmarks(fixed);
    r.fine = kabsch_umeyama(r.moving_landmarks, r.fixed_landmarks);
    r.total = compose(r.fine, r.coarse);
    r.aligned = apply_rigid_to_mask(moving, r.total, fixed.geometry());
    return r;
}

}  // namespace recon
