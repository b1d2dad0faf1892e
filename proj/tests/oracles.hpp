#pragma once

// Slow, independent reference implementations used as test oracles.

#include "recon/recon.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <deque>
#include <limits>
#include <vector>

namespace oracles {

using namespace recon;
using Rational = boost::multiprecision::cpp_rational;

/// Cut c in 1..255 minimizing the within-class variance, evaluated exactly on
/// the true bin centers; the lowest cut wins ties. Returns -1 if no cut splits.
inline int otsu_cut_bruteforce(const Histogram& h) {
    std::vector<Rational> n(kHistogramBins), c(kHistogramBins);
    for (int b = 0; b < kHistogramBins; ++b) {
        n[b] = Rational(h.counts[b]);
        c[b] = Rational(h.bin_edges[b]) / 2 + Rational(h.bin_edges[b + 1]) / 2;
    }
    // prefix sums of n, n c, n c^2
    std::vector<Rational> pn(kHistogramBins + 1), ps(kHistogramBins + 1), pq(kHistogramBins + 1);
    for (int b = 0; b < kHistogramBins; ++b) {
        pn[b + 1] = pn[b] + n[b];
        ps[b + 1] = ps[b] + n[b] * c[b];
        pq[b + 1] = pq[b] + n[b] * c[b] * c[b];
    }
    int best = -1;
    Rational best_w;
    for (int cut = 1; cut < kHistogramBins; ++cut) {
        const Rational n0 = pn[cut], n1 = pn[kHistogramBins] - pn[cut];
        if (n0 == 0 || n1 == 0) continue;
        const Rational s0 = ps[cut], s1 = ps[kHistogramBins] - ps[cut];
        const Rational q0 = pq[cut], q1 = pq[kHistogramBins] - pq[cut];
        // N * sigma_w^2 = sum over classes of (sum n c^2 - S^2/n)
        const Rational w = (q0 - s0 * s0 / n0) + (q1 - s1 * s1 / n1);
        if (best < 0 || w < best_w) {
            best = cut;
            best_w = w;
        }
    }
    return best;
}

inline ConfusionCounts confusion_bruteforce(const BinaryMask& pred, const BinaryMask& truth) {
    ConfusionCounts c;
    const auto& g = pred.geometry();
    for (std::int64_t k = 0; k < g.dims[2]; ++k) {
        for (std::int64_t j = 0; j < g.dims[1]; ++j) {
            for (std::int64_t i = 0; i < g.dims[0]; ++i) {
                const bool p = pred.at({i, j, k}) != 0;
                const bool t = truth.at({i, j, k}) != 0;
                if (p && t) ++c.tp;
                else if (!p && !t) ++c.tn;
                else if (p) ++c.fp;
                else ++c.fn;
            }
        }
    }
    return c;
}

/// Union of the connected components (under `offsets`) of the admitted voxels
/// that contain at least one admitted seed, via union-find.
inline BinaryMask components_touching(const std::vector<bool>& admitted, const GridGeometry& g,
                                      const std::vector<Index3>& offsets, const std::vector<Index3>& seeds) {
    std::vector<std::size_t> parent(admitted.size());
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t i = 0; i < admitted.size(); ++i) {
        if (!admitted[i]) continue;
        const Index3 c = g.decode(i);
        for (const auto& o : offsets) {
            const Index3 n{c[0] + o[0], c[1] + o[1], c[2] + o[2]};
            if (!g.contains(n)) continue;
            const auto j = g.encode(n);
            if (admitted[j]) parent[find(i)] = find(j);
        }
    }
    std::vector<bool> root_hit(admitted.size(), false);
    for (const auto& s : seeds) {
        const auto i = g.encode(s);
        if (admitted[i]) root_hit[find(i)] = true;
    }
    BinaryMask out(g, 0);
    for (std::size_t i = 0; i < admitted.size(); ++i) out[i] = (admitted[i] && root_hit[find(i)]) ? 1 : 0;
    return out;
}

inline std::vector<double> nn_bruteforce(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    std::vector<double> d;
    d.reserve(from.size());
    for (const auto& p : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : to) best = std::min(best, (p - q).norm());
        d.push_back(best);
    }
    return d;
}

/// Horn's closed-form quaternion solution to the absolute orientation problem.
inline RigidTransform horn_quaternion(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
    Vec3 ms = Vec3::Zero(), md = Vec3::Zero();
    for (std::size_t i = 0; i < src.size(); ++i) {
        ms += src[i];
        md += dst[i];
    }
    ms /= static_cast<double>(src.size());
    md /= static_cast<double>(src.size());
    Mat3 m = Mat3::Zero();
    for (std::size_t i = 0; i < src.size(); ++i) m += (src[i] - ms) * (dst[i] - md).transpose();
    const double sxx = m(0, 0), sxy = m(0, 1), sxz = m(0, 2), syx = m(1, 0), syy = m(1, 1), syz = m(1, 2),
                 szx = m(2, 0), szy = m(2, 1), szz = m(2, 2);
    Eigen::Matrix4d n;
    n << sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,  //
        syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,   //
        szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,  //
        sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(n);
    const Eigen::Vector4d q = es.eigenvectors().col(3);
    RigidTransform t;
    t.rotation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized().toRotationMatrix();
    t.translation = md - t.rotation * ms;
    return t;
}

inline double sse(const RigidTransform& t, const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
    double s = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) s += (t(src[i]) - dst[i]).squaredNorm();
    return s;
}

}  // namespace oracles
