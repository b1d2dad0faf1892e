#pragma once

// Two-stage rigid point-cloud registration: voxel downsampling, PCA normals,
// FPFH descriptors, RANSAC over feature matches, then point-to-plane ICP.

#include "recon/kdtree.hpp"
#include "recon/mesh.hpp"
#include "recon/rigid.hpp"
#include "recon/voxel_align.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace recon {

struct PointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;  // empty, or one unit vector per point

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    bool has_normals() const { return !normals.empty() && normals.size() == points.size(); }
};

inline PointCloud transformed(const PointCloud& c, const RigidTransform& t) {
    PointCloud out = c;
    for (auto& p : out.points) p = t(p);
    for (auto& n : out.normals) n = t.rotation * n;
    return out;
}

/// Mesh vertices with area-weighted vertex normals.
inline PointCloud mesh_to_pointcloud(const TriangleMesh& mesh) {
    if (mesh.vertices.empty() || mesh.triangles.empty()) throw Error("cannot build a point cloud from an empty mesh");
    return {mesh.vertices, vertex_normals(mesh)};
}

/// One point per occupied cell floor(p / voxel): the centroid of its members, with
/// the renormalized mean normal. Output is ordered by cell key.
inline PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
    if (!(voxel > 0.0)) throw Error("downsample voxel size must be positive");
    struct Acc {
        Vec3 p = Vec3::Zero();
        Vec3 n = Vec3::Zero();
        std::size_t count = 0;
    };
    std::map<std::array<std::int64_t, 3>, Acc> cells;
    const bool normals = cloud.has_normals();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3& p = cloud.points[i];
        const std::array<std::int64_t, 3> key{static_cast<std::int64_t>(std::floor(p[0] / voxel)),
                                              static_cast<std::int64_t>(std::floor(p[1] / voxel)),
                                              static_cast<std::int64_t>(std::floor(p[2] / voxel))};
        auto& a = cells[key];
        a.p += p;
        if (normals) a.n += cloud.normals[i];
        ++a.count;
    }
    PointCloud out;
    out.points.reserve(cells.size());
    for (const auto& [key, a] : cells) {
        out.points.push_back(a.p / static_cast<double>(a.count));
        if (normals) {
            const double len = a.n.norm();
            out.normals.push_back(len > 0.0 ? Vec3(a.n / len) : Vec3(Vec3::UnitZ()));
        }
    }
    return out;
}

/// Normal of each point = smallest-eigenvalue eigenvector of the covariance of its
/// k nearest neighbors (itself included), flipped to point away from the cloud
/// centroid; points level with the centroid take the largest-component-positive sign.
inline PointCloud estimate_normals(const PointCloud& cloud, std::size_t k) {
    if (k < 3) throw Error("normal estimation needs k >= 3");
    if (cloud.size() <= k) {
        throw Error("normal estimation needs more than k = " + std::to_string(k) + " points, cloud has " +
                    std::to_string(cloud.size()));
    }
    const auto tree = make_kdtree(cloud.points);
    Vec3 centroid = Vec3::Zero();
    double extent = 0.0;
    for (const auto& p : cloud.points) centroid += p;
    centroid /= static_cast<double>(cloud.size());
    for (const auto& p : cloud.points) extent = std::max(extent, (p - centroid).norm());
    PointCloud out;
    out.points = cloud.points;
    out.normals.resize(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto nb = tree.knn(to_point(cloud.points[i]), k);
        Vec3 m = Vec3::Zero();
        for (const auto& n : nb) m += cloud.points[n.index];
        m /= static_cast<double>(nb.size());
        Mat3 cov = Mat3::Zero();
        for (const auto& n : nb) {
            const Vec3 d = cloud.points[n.index] - m;
            cov += d * d.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
        Vec3 normal = es.eigenvectors().col(0).normalized();
        const double side = normal.dot(cloud.points[i] - centroid);
        if (std::abs(side) <= 1e-9 * std::max(1.0, extent)) {
            detail::apply_sign_rule(normal);
        } else if (side < 0.0) {
            normal = -normal;
        }
        out.normals[i] = normal;
    }
    return out;
}

// ---------------------------------------------------------------------------
// FPFH

inline constexpr int kFpfhBinsPerFeature = 11;
inline constexpr int kFpfhBins = 3 * kFpfhBinsPerFeature;
using FpfhHistogram = std::array<double, kFpfhBins>;

struct FpfhFeatureSet {
    std::vector<FpfhHistogram> histograms;  // each sums to 100, or is all zero
    std::vector<std::uint8_t> isolated;     // 1 where the point had no radius neighbors
    std::size_t size() const { return histograms.size(); }
};

namespace detail {

/// Darboux-frame pair features (alpha, phi, theta) of Rusu et al.; empty when the
/// pair is degenerate (coincident points or normal parallel to the baseline).
inline std::optional<std::array<double, 3>> pair_features(const Vec3& p1, const Vec3& n1, const Vec3& p2,
                                                          const Vec3& n2) {
    Vec3 d = p2 - p1;
    const double len = d.norm();
    if (len == 0.0) return std::nullopt;
    Vec3 a = n1, b = n2;
    const double c1 = a.dot(d) / len;
    const double c2 = b.dot(d) / len;
    double theta;
    // The source of the frame is the point whose normal makes the smaller angle with the baseline.
    if (std::acos(std::abs(c1)) > std::acos(std::abs(c2))) {
        std::swap(a, b);
        d = -d;
        theta = -c2;
    } else {
        theta = c1;
    }
    Vec3 v = d.cross(a);
    const double vn = v.norm();
    if (vn == 0.0) return std::nullopt;
    v /= vn;
    const Vec3 w = a.cross(v);
    const double phi = v.dot(b);
    const double alpha = std::atan2(w.dot(b), a.dot(b));
    return std::array<double, 3>{alpha, phi, theta};
}

inline int feature_bin(double value, double lo, double hi) {
    const int b = static_cast<int>(std::floor(kFpfhBinsPerFeature * (value - lo) / (hi - lo)));
    return std::clamp(b, 0, kFpfhBinsPerFeature - 1);
}

}  // namespace detail

/// Two-pass FPFH: SPFH over radius neighbors, then
/// FPFH(p) = SPFH(p) + (1/k) * sum_q SPFH(q) / |p - q|, normalized to sum 100.
inline FpfhFeatureSet compute_fpfh(const PointCloud& cloud, double radius) {
    if (!cloud.has_normals()) throw Error("FPFH needs a cloud with normals");
    if (!(radius > 0.0)) throw Error("FPFH radius must be positive");
    const auto tree = make_kdtree(cloud.points);
    const std::size_t n = cloud.size();
    std::vector<std::vector<KdTree3::Neighbor>> nbrs(n);
    std::vector<FpfhHistogram> spfh(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto all = tree.radius(to_point(cloud.points[i]), radius);
        for (const auto& q : all) {
            if (q.index != i) nbrs[i].push_back(q);
        }
        FpfhHistogram h{};
        std::size_t used = 0;
        for (const auto& q : nbrs[i]) {
            const auto f = detail::pair_features(cloud.points[i], cloud.normals[i], cloud.points[q.index],
                                                 cloud.normals[q.index]);
            if (!f) continue;
            ++h[detail::feature_bin((*f)[0], -kPi, kPi)];
            ++h[kFpfhBinsPerFeature + detail::feature_bin((*f)[1], -1.0, 1.0)];
            ++h[2 * kFpfhBinsPerFeature + detail::feature_bin((*f)[2], -1.0, 1.0)];
            ++used;
        }
        if (used > 0) {
            for (auto& v : h) v *= 100.0 / static_cast<double>(used);
        }
        spfh[i] = h;
    }
    FpfhFeatureSet out;
    out.histograms.resize(n);
    out.isolated.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (nbrs[i].empty()) {
            out.isolated[i] = 1;
            out.histograms[i].fill(0.0);
            continue;
        }
        FpfhHistogram acc{};
        std::size_t k = 0;
        for (const auto& q : nbrs[i]) {
            const double dist = std::sqrt(q.dist2);
            if (dist == 0.0) continue;
            for (int b = 0; b < kFpfhBins; ++b) acc[b] += spfh[q.index][b] / dist;
            ++k;
        }
        FpfhHistogram h = spfh[i];
        if (k > 0) {
            for (int b = 0; b < kFpfhBins; ++b) h[b] += acc[b] / static_cast<double>(k);
        }
        double sum = 0.0;
        for (double v : h) sum += v;
        if (sum > 0.0) {
            for (auto& v : h) v *= 100.0 / sum;
        } else {
            out.isolated[i] = 1;
        }
        out.histograms[i] = h;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Registration results and evaluation

struct RegistrationResult {
    RigidTransform transform;
    double fitness = 0.0;      // fraction of source points with a correspondence
    double inlier_rmse = 0.0;  // mm
    int iterations_used = 0;
    bool converged = false;
    std::vector<double> objective_trace;  // ICP only
};

struct RansacConfig {
    int n_sample_points = 3;
    int max_iterations = 100000;
    double confidence = 0.999;
    double distance_threshold = 1.5;  // mm
    double edge_length_ratio = 0.9;
    std::uint64_t seed = 0;
};

struct IcpConfig {
    double max_correspondence = 2.0;  // mm
    int max_iterations = 50;
    double rel_change_tol = 1e-6;
};

struct Correspondences {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (source, target)
    double fitness = 0.0;
    double inlier_rmse = 0.0;
    double objective = 0.0;  // truncated point-to-plane objective (plane mode only)
};

/// Nearest-target correspondences within `max_distance` of the transformed source.
/// RMSE is point-to-point, or point-to-plane when `plane` is set (target normals
/// required). The truncated objective charges max_distance^2 per unmatched point.
inline Correspondences evaluate_registration(const PointCloud& src, const PointCloud& dst, const KdTree3& dst_tree,
                                             const RigidTransform& t, double max_distance, bool plane) {
    Correspondences c;
    double err = 0.0;
    const double md2 = max_distance * max_distance;
    for (std::size_t i = 0; i < src.size(); ++i) {
        const Vec3 p = t(src.points[i]);
        const auto nb = dst_tree.nearest(to_point(p));
        if (nb.dist2 > md2) continue;
        c.pairs.emplace_back(i, nb.index);
        if (plane) {
            const double r = dst.normals[nb.index].dot(p - dst.points[nb.index]);
            err += r * r;
        } else {
            err += nb.dist2;
        }
    }
    const auto m = c.pairs.size();
    c.fitness = src.empty() ? 0.0 : static_cast<double>(m) / static_cast<double>(src.size());
    c.inlier_rmse = m ? std::sqrt(err / static_cast<double>(m)) : 0.0;
    c.objective = err + static_cast<double>(src.size() - m) * md2;
    return c;
}

// ---------------------------------------------------------------------------
// RANSAC

/// Feature-matched RANSAC. Correspondences pair every source point with its nearest
/// target descriptor. Each iteration samples `n_sample_points` of them, rejects
/// samples failing the edge-length ratio test, fits Kabsch, and scores the
/// hypothesis by how many correspondences it maps within `distance_threshold`
/// (ties keep the earliest). The winner is refined by Kabsch on its geometric
/// inliers; fitness and inlier_rmse are reported for the final transform.
inline RegistrationResult ransac_global_registration(const PointCloud& src, const PointCloud& dst,
                                                     const FpfhFeatureSet& src_feat, const FpfhFeatureSet& dst_feat,
                                                     const RansacConfig& cfg) {
    if (src_feat.size() != src.size() || dst_feat.size() != dst.size()) {
        throw Error("feature sets must be index-aligned with their clouds");
    }
    if (cfg.n_sample_points < 3) throw Error("RANSAC needs at least 3 points per sample");
    if (!(cfg.edge_length_ratio > 0.0 && cfg.edge_length_ratio <= 1.0)) throw Error("edge_length_ratio must lie in (0, 1]");
    if (!(cfg.confidence > 0.0 && cfg.confidence < 1.0)) throw Error("RANSAC confidence must lie in (0, 1)");
    if (src.size() < 3 || dst.empty()) throw Error("RANSAC needs at least 3 correspondences");

    std::vector<KdTree<kFpfhBins>::Point> dfeat(dst_feat.histograms.begin(), dst_feat.histograms.end());
    const KdTree<kFpfhBins> feat_tree(std::move(dfeat));
    std::vector<std::pair<std::size_t, std::size_t>> corr;
    corr.reserve(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) corr.emplace_back(i, feat_tree.nearest(src_feat.histograms[i]).index);
    if (corr.size() < static_cast<std::size_t>(cfg.n_sample_points)) throw Error("RANSAC needs at least 3 correspondences");

    const auto dst_tree = make_kdtree(dst.points);
    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick(0, corr.size() - 1);
    const auto ns = static_cast<std::size_t>(cfg.n_sample_points);
    std::vector<Vec3> sp(ns), dp(ns);
    std::vector<std::size_t> sample(ns);

    RegistrationResult best;
    bool found = false;
    std::size_t best_agree = 0;
    double max_iter = cfg.max_iterations;
    int it = 0;
    for (; it < cfg.max_iterations && it < max_iter; ++it) {
        for (std::size_t s = 0; s < ns; ++s) {
            bool fresh;
            do {
                sample[s] = pick(rng);
                fresh = std::find(sample.begin(), sample.begin() + static_cast<std::ptrdiff_t>(s), sample[s]) ==
                        sample.begin() + static_cast<std::ptrdiff_t>(s);
            } while (!fresh);
            sp[s] = src.points[corr[sample[s]].first];
            dp[s] = dst.points[corr[sample[s]].second];
        }
        bool edges_ok = true;
        for (std::size_t a = 0; a < ns && edges_ok; ++a) {
            for (std::size_t b = a + 1; b < ns && edges_ok; ++b) {
                const double ls = (sp[a] - sp[b]).norm();
                const double ld = (dp[a] - dp[b]).norm();
                edges_ok = ls >= cfg.edge_length_ratio * ld && ld >= cfg.edge_length_ratio * ls;
            }
        }
        if (!edges_ok) continue;
        const auto t = detail::try_kabsch(sp, dp);
        if (!t) continue;
        bool close = true;
        for (std::size_t s = 0; s < ns && close; ++s) close = ((*t)(sp[s]) - dp[s]).norm() <= cfg.distance_threshold;
        if (!close) continue;
        std::size_t agree = 0;
        for (const auto& [i, j] : corr) agree += ((*t)(src.points[i]) - dst.points[j]).norm() <= cfg.distance_threshold;
        if (!found || agree > best_agree) {
            found = true;
            best_agree = agree;
            best.transform = *t;
            // chance that a sampled correspondence is correct under the best hypothesis so far
            const double inlier_prob =
                std::pow(static_cast<double>(agree) / static_cast<double>(corr.size()), static_cast<double>(ns));
            if (inlier_prob >= 1.0) {
                max_iter = 0;
            } else if (inlier_prob > 0.0) {
                max_iter = std::min(max_iter, std::log(1.0 - cfg.confidence) / std::log(1.0 - inlier_prob));
            }
        }
    }
    best.iterations_used = it;
    if (!found) return best;
    best.converged = true;
    const auto ev = evaluate_registration(src, dst, dst_tree, best.transform, cfg.distance_threshold, false);
    best.fitness = ev.fitness;
    best.inlier_rmse = ev.inlier_rmse;
    if (ev.pairs.size() >= 3) {
        std::vector<Vec3> a, b;
        for (const auto& [i, j] : ev.pairs) {
            a.push_back(src.points[i]);
            b.push_back(dst.points[j]);
        }
        if (auto refined = detail::try_kabsch(a, b)) {
            const auto rv = evaluate_registration(src, dst, dst_tree, *refined, cfg.distance_threshold, false);
            if (rv.fitness >= best.fitness) {
                best.transform = *refined;
                best.fitness = rv.fitness;
                best.inlier_rmse = rv.inlier_rmse;
            }
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// ICP

/// Point-to-plane ICP. Each step solves the small-angle linearization of
/// sum (n_q . (R p + t - q))^2 from its 6x6 normal equations (minimum-norm
/// solution, so symmetric directions stay put) and applies the exact rotation of the
/// solved rotation vector. Steps that would raise the truncated objective are
/// halved, so objective_trace never increases.
inline RegistrationResult icp_point_to_plane(const PointCloud& src, const PointCloud& dst, const RigidTransform& init,
                                             const IcpConfig& cfg) {
    if (!dst.has_normals()) throw Error("point-to-plane ICP needs target normals");
    if (!(cfg.max_correspondence > 0.0)) throw Error("ICP max_correspondence must be positive");
    if (src.empty() || dst.empty()) throw Error("ICP needs non-empty clouds");
    const auto tree = make_kdtree(dst.points);
    RigidTransform t = init;
    auto cur = evaluate_registration(src, dst, tree, t, cfg.max_correspondence, true);
    if (cur.pairs.empty()) {
        throw Error("ICP found no correspondences within max_correspondence = " + std::to_string(cfg.max_correspondence) +
                    " mm at the initial transform");
    }
    RegistrationResult res;
    res.objective_trace.push_back(cur.objective);
    auto rel = [](double now, double before) { return std::abs(now - before) / std::max(std::abs(before), 1e-9); };
    int it = 0;
    for (; it < cfg.max_iterations; ++it) {
        Eigen::Matrix<double, 6, 6> ata = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> atb = Eigen::Matrix<double, 6, 1>::Zero();
        for (const auto& [i, j] : cur.pairs) {
            const Vec3 p = t(src.points[i]);
            const Vec3& n = dst.normals[j];
            Eigen::Matrix<double, 6, 1> row;
            row.head<3>() = p.cross(n);
            row.tail<3>() = n;
            const double r = n.dot(p - dst.points[j]);
            ata += row * row.transpose();
            atb -= row * r;
        }
        const Eigen::Matrix<double, 6, 1> x = ata.completeOrthogonalDecomposition().solve(atb);
        RigidTransform next;
        Correspondences cand;
        bool accepted = false;
        double step = 1.0;
        for (int h = 0; h < 12; ++h, step *= 0.5) {
            const RigidTransform delta{rotation_from_vector(step * x.head<3>()), step * x.tail<3>()};
            next = compose(delta, t);
            next.rotation = orthonormalize(next.rotation);
            cand = evaluate_registration(src, dst, tree, next, cfg.max_correspondence, true);
            if (!cand.pairs.empty() && cand.objective <= cur.objective) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            res.converged = true;
            break;
        }
        const bool small = rel(cand.inlier_rmse, cur.inlier_rmse) < cfg.rel_change_tol &&
                           rel(cand.fitness, cur.fitness) < cfg.rel_change_tol;
        t = next;
        cur = std::move(cand);
        res.objective_trace.push_back(cur.objective);
        if (small) {
            res.converged = true;
            ++it;
            break;
        }
    }
    res.transform = t;
    res.fitness = cur.fitness;
    res.inlier_rmse = cur.inlier_rmse;
    res.iterations_used = it;
    return res;
}

// ---------------------------------------------------------------------------
// Composite pipeline

/// Stage parameters. Lengths left unset derive from `downsample_voxel`.
struct RegistrationConfig {
    double downsample_voxel = 1.0;  // mm
    std::size_t normal_k = 30;
    std::optional<double> fpfh_radius;  // default 5 x downsample_voxel
    RansacConfig ransac;
    std::optional<double> ransac_distance_threshold;  // default 1.5 x downsample_voxel
    IcpConfig icp;
    std::optional<double> icp_max_correspondence;  // default 2 x downsample_voxel

    double effective_fpfh_radius() const { return fpfh_radius.value_or(5.0 * downsample_voxel); }
    double effective_distance_threshold() const { return ransac_distance_threshold.value_or(1.5 * downsample_voxel); }
    double effective_max_correspondence() const { return icp_max_correspondence.value_or(2.0 * downsample_voxel); }

    void validate() const {
        if (!(downsample_voxel > 0.0)) throw Error("downsample_voxel must be positive");
        if (!(effective_fpfh_radius() > 0.0) || !(effective_distance_threshold() > 0.0) ||
            !(effective_max_correspondence() > 0.0)) {
            throw Error("registration lengths must be positive");
        }
        if (!(ransac.edge_length_ratio > 0.0 && ransac.edge_length_ratio <= 1.0)) {
            throw Error("edge_length_ratio must lie in (0, 1]");
        }
        if (!(ransac.confidence > 0.0 && ransac.confidence < 1.0)) throw Error("confidence must lie in (0, 1)");
        if (normal_k < 3) throw Error("normal_k must be >= 3");
    }
};

struct CompositeRegistration {
    RegistrationResult coarse;  // RANSAC on downsampled clouds
    RegistrationResult fine;    // ICP on the full clouds
    std::size_t source_downsampled = 0;
    std::size_t target_downsampled = 0;
};

/// Aligns `src` onto `dst`: downsample -> normals -> FPFH -> RANSAC -> ICP.
/// ICP runs on the full clouds; the target keeps its own normals when present.
inline CompositeRegistration register_clouds(const PointCloud& src, const PointCloud& dst,
                                             const RegistrationConfig& cfg) {
    cfg.validate();
    const PointCloud sd = voxel_downsample(PointCloud{src.points, {}}, cfg.downsample_voxel);
    const PointCloud dd = voxel_downsample(PointCloud{dst.points, {}}, cfg.downsample_voxel);
    if (sd.size() < 4 || dd.size() < 4) throw Error("downsampled clouds are too small for registration");
    const std::size_t ks = std::min(cfg.normal_k, sd.size() - 1);
    const std::size_t kd = std::min(cfg.normal_k, dd.size() - 1);
    const PointCloud sn = estimate_normals(sd, std::max<std::size_t>(3, ks));
    const PointCloud dn = estimate_normals(dd, std::max<std::size_t>(3, kd));
    const auto sf = compute_fpfh(sn, cfg.effective_fpfh_radius());
    const auto df = compute_fpfh(dn, cfg.effective_fpfh_radius());
    RansacConfig rc = cfg.ransac;
    rc.distance_threshold = cfg.effective_distance_threshold();
    CompositeRegistration out;
    out.source_downsampled = sd.size();
    out.target_downsampled = dd.size();
    out.coarse = ransac_global_registration(sn, dn, sf, df, rc);
    PointCloud target = dst;
    if (!target.has_normals()) target = estimate_normals(dst, std::min(cfg.normal_k, dst.size() - 1));
    IcpConfig ic = cfg.icp;
    ic.max_correspondence = cfg.effective_max_correspondence();
    out.fine = icp_point_to_plane(src, target, out.coarse.transform, ic);
    return out;
}

}  // namespace recon
