#pragma once

#include "recon/grid.hpp"
#include "recon/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace recon {

namespace detail {

/// Orientation of the symbolically perturbed query (y + e, z + e^2) relative to the
/// directed yz-edge a->b. Never returns 0 unless a and b project to the same point.
inline int perturbed_orient(double ay, double az, double by, double bz, double qy, double qz) {
    const double o = (by - ay) * (qz - az) - (bz - az) * (qy - ay);
    if (o > 0.0) return 1;
    if (o < 0.0) return -1;
    const double de = -(bz - az);
    if (de != 0.0) return de > 0.0 ? 1 : -1;
    const double de2 = by - ay;
    if (de2 != 0.0) return de2 > 0.0 ? 1 : -1;
    return 0;
}

/// Orientation evaluated with a canonical vertex order so that triangles sharing an
/// edge see bit-identical arithmetic.
inline int canonical_orient(const Vec3& a, const Vec3& b, double qy, double qz) {
    const bool swap = (a[1] > b[1]) || (a[1] == b[1] && a[2] > b[2]);
    if (!swap) return perturbed_orient(a[1], a[2], b[1], b[2], qy, qz);
    return -perturbed_orient(b[1], b[2], a[1], a[2], qy, qz);
}

struct RayHit {
    double x;
    bool counts_on_tie;  // hit at exactly the voxel center still lies ahead of the perturbed center
};

}  // namespace detail

/// Boundary (use count 1) and non-manifold (use count > 2) edge counts.
inline std::pair<std::size_t, std::size_t> open_edge_counts(const TriangleMesh& mesh) {
    const auto s = mesh_stats(mesh);
    return {s.boundary_edge_count, s.nonmanifold_edge_count};
}

/// Rasterizes a closed surface: a voxel is foreground iff its center is inside,
/// decided by the parity of +x ray crossings. The query point is perturbed to
/// (x + e^3, y + e, z + e^2) for infinitesimal e, so every tie has a fixed answer;
/// an axis-aligned box whose faces pass through voxel centers covers the half-open
/// range [lo, hi) on each axis.
inline BinaryMask voxelize_mesh(const TriangleMesh& mesh, const GridGeometry& geometry) {
    geometry.validate();
    mesh.validate();
    if (mesh.triangles.empty()) throw Error("cannot voxelize an empty mesh");
    const auto [boundary, nonmanifold] = open_edge_counts(mesh);
    if (boundary != 0 || nonmanifold != 0) {
        throw Error("mesh is not watertight: " + std::to_string(boundary) + " boundary edges, " +
                    std::to_string(nonmanifold) + " non-manifold edges");
    }
    Vec3 lo = mesh.vertices[mesh.triangles[0][0]];
    Vec3 hi = lo;
    for (const auto& t : mesh.triangles) {
        for (auto v : t) {
            lo = lo.cwiseMin(mesh.vertices[v]);
            hi = hi.cwiseMax(mesh.vertices[v]);
        }
    }
    for (int a = 0; a < 3; ++a) {
        const double glo = geometry.origin[a] - 0.5 * geometry.spacing[a];
        const double ghi = geometry.origin[a] + (static_cast<double>(geometry.dims[a]) - 0.5) * geometry.spacing[a];
        if (lo[a] < glo || hi[a] > ghi) {
            throw Error("mesh bounding box lies outside the grid extent on axis " + std::to_string(a));
        }
    }

    const auto nx = geometry.dims[0];
    const auto ny = geometry.dims[1];
    const auto nz = geometry.dims[2];
    std::vector<std::vector<detail::RayHit>> rows(static_cast<std::size_t>(ny * nz));

    for (const auto& t : mesh.triangles) {
        const Vec3& a = mesh.vertices[t[0]];
        const Vec3& b = mesh.vertices[t[1]];
        const Vec3& c = mesh.vertices[t[2]];
        const Vec3 n = (b - a).cross(c - a);
        if (n[0] == 0.0) continue;  // parallel to the ray; never crossed under perturbation
        const int s = n[0] > 0.0 ? 1 : -1;
        const double ymin = std::min({a[1], b[1], c[1]}), ymax = std::max({a[1], b[1], c[1]});
        const double zmin = std::min({a[2], b[2], c[2]}), zmax = std::max({a[2], b[2], c[2]});
        const auto j0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil((ymin - geometry.origin[1]) / geometry.spacing[1])) - 1);
        const auto j1 = std::min<std::int64_t>(ny - 1, static_cast<std::int64_t>(std::floor((ymax - geometry.origin[1]) / geometry.spacing[1])) + 1);
        const auto k0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil((zmin - geometry.origin[2]) / geometry.spacing[2])) - 1);
        const auto k1 = std::min<std::int64_t>(nz - 1, static_cast<std::int64_t>(std::floor((zmax - geometry.origin[2]) / geometry.spacing[2])) + 1);
        // x = f(y, z) on the triangle's plane; the signs of df/dy and df/dz order ties.
        const double gy = -n[1] / n[0];
        const double gz = -n[2] / n[0];
        const bool tie_ahead = gy > 0.0 || (gy == 0.0 && gz > 0.0);
        for (std::int64_t k = k0; k <= k1; ++k) {
            const double qz = geometry.origin[2] + static_cast<double>(k) * geometry.spacing[2];
            for (std::int64_t j = j0; j <= j1; ++j) {
                const double qy = geometry.origin[1] + static_cast<double>(j) * geometry.spacing[1];
                // The yz-projection of (a, b, c) has orientation sign s.
                if (detail::canonical_orient(a, b, qy, qz) != s) continue;
                if (detail::canonical_orient(b, c, qy, qz) != s) continue;
                if (detail::canonical_orient(c, a, qy, qz) != s) continue;
                const double x = a[0] - (n[1] * (qy - a[1]) + n[2] * (qz - a[2])) / n[0];
                rows[static_cast<std::size_t>(j + ny * k)].push_back({x, tie_ahead});
            }
        }
    }

    BinaryMask mask(geometry, 0);
    for (std::int64_t k = 0; k < nz; ++k) {
        for (std::int64_t j = 0; j < ny; ++j) {
            auto& hits = rows[static_cast<std::size_t>(j + ny * k)];
            if (hits.empty()) continue;
            std::sort(hits.begin(), hits.end(), [](const auto& l, const auto& r) { return l.x < r.x; });
            for (std::int64_t i = 0; i < nx; ++i) {
                const double xc = geometry.origin[0] + static_cast<double>(i) * geometry.spacing[0];
                std::size_t ahead = 0;
                for (const auto& h : hits) {
                    if (h.x > xc || (h.x == xc && h.counts_on_tie)) ++ahead;
                }
                if (ahead % 2 == 1) mask.at({i, j, k}) = 1;
            }
        }
    }
    return mask;
}

}  // namespace recon
