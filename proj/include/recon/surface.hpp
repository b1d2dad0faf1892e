#pragma once

#include "recon/detail/mc_tables.hpp"
#include "recon/grid.hpp"
#include "recon/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

namespace recon {

namespace detail {

// Corner c of a cell sits at lattice offset kMcCorner[c].
inline constexpr int kMcCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                        {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
// Edge e joins corners kMcEdge[e][0] and kMcEdge[e][1].
inline constexpr int kMcEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                       {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

}  // namespace detail

/// Marching cubes over the voxel-center lattice with linear edge interpolation in
/// world coordinates. Each crossed grid edge yields exactly one shared vertex, so a
/// foreground that does not touch the grid border produces a closed surface.
/// Triangles are wound so their normals point toward lower values (outward for a
/// bright object). An iso level outside (min, max) gives an empty mesh.
template <typename T>
TriangleMesh marching_cubes(const Grid<T>& volume, double iso, std::vector<std::string>* warnings = nullptr) {
    const auto& g = volume.geometry();
    if (g.dims[0] < 2 || g.dims[1] < 2 || g.dims[2] < 2) throw Error("marching cubes needs a grid of at least 2x2x2");
    const auto [mn, mx] = std::minmax_element(volume.values().begin(), volume.values().end());
    if (!(iso > static_cast<double>(*mn) && iso < static_cast<double>(*mx))) {
        if (warnings) warnings->push_back("iso level " + std::to_string(iso) + " is outside the data range; empty surface");
        return {};
    }
    TriangleMesh mesh;
    std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;
    auto value = [&](std::int64_t i, std::int64_t j, std::int64_t k) {
        return static_cast<double>(volume.at({i, j, k}));
    };
    // Vertex on the lattice edge from (i,j,k) along `axis`.
    auto vertex_on = [&](std::int64_t i, std::int64_t j, std::int64_t k, int axis) -> std::uint32_t {
        const std::uint64_t key = 3 * static_cast<std::uint64_t>(g.encode({i, j, k})) + static_cast<std::uint64_t>(axis);
        if (auto it = edge_vertex.find(key); it != edge_vertex.end()) return it->second;
        Index3 q{i, j, k};
        ++q[axis];
        const double v0 = value(i, j, k);
        const double v1 = volume.at(q);
        const double t = (iso - v0) / (v1 - v0);
        const Vec3 p0 = g.world({i, j, k});
        const Vec3 p1 = g.world(q);
        const auto id = static_cast<std::uint32_t>(mesh.vertices.size());
        mesh.vertices.push_back(p0 + t * (p1 - p0));
        edge_vertex.emplace(key, id);
        return id;
    };
    for (std::int64_t k = 0; k + 1 < g.dims[2]; ++k) {
        for (std::int64_t j = 0; j + 1 < g.dims[1]; ++j) {
            for (std::int64_t i = 0; i + 1 < g.dims[0]; ++i) {
                int cube = 0;
                for (int c = 0; c < 8; ++c) {
                    const auto& o = detail::kMcCorner[c];
                    if (value(i + o[0], j + o[1], k + o[2]) < iso) cube |= 1 << c;
                }
                if (detail::kMcEdgeTable[cube] == 0) continue;
                std::uint32_t ev[12] = {};
                for (int e = 0; e < 12; ++e) {
                    if (!(detail::kMcEdgeTable[cube] & (1 << e))) continue;
                    const auto& a = detail::kMcCorner[detail::kMcEdge[e][0]];
                    const auto& b = detail::kMcCorner[detail::kMcEdge[e][1]];
                    // Canonical edge: start at the lower corner.
                    std::int64_t s[3];
                    int axis = 0;
                    for (int d = 0; d < 3; ++d) {
                        s[d] = std::min(a[d], b[d]);
                        if (a[d] != b[d]) axis = d;
                    }
                    ev[e] = vertex_on(i + s[0], j + s[1], k + s[2], axis);
                }
                for (int t = 0; detail::kMcTriTable[cube][t] != -1; t += 3) {
                    mesh.triangles.push_back({ev[detail::kMcTriTable[cube][t]], ev[detail::kMcTriTable[cube][t + 1]],
                                              ev[detail::kMcTriTable[cube][t + 2]]});
                }
            }
        }
    }
    return remove_degenerate(mesh);
}

/// Binary masks are lifted to {0, 1} and contoured at 0.5.
inline TriangleMesh marching_cubes(const BinaryMask& mask, std::vector<std::string>* warnings = nullptr) {
    return marching_cubes(mask, 0.5, warnings);
}

/// One-ring neighbor lists (sorted, unique) from triangle connectivity.
inline std::vector<std::vector<std::uint32_t>> vertex_neighbors(const TriangleMesh& mesh) {
    std::vector<std::vector<std::uint32_t>> nb(mesh.vertices.size());
    for (const auto& t : mesh.triangles) {
        for (int e = 0; e < 3; ++e) {
            nb[t[e]].push_back(t[(e + 1) % 3]);
            nb[t[e]].push_back(t[(e + 2) % 3]);
        }
    }
    for (auto& n : nb) {
        std::sort(n.begin(), n.end());
        n.erase(std::unique(n.begin(), n.end()), n.end());
    }
    return nb;
}

/// Umbrella-operator smoothing, v <- v + lambda * (mean(one-ring) - v), with all
/// vertices updated from the previous iteration's positions.
inline TriangleMesh laplacian_smooth(const TriangleMesh& mesh, double lambda, int iterations) {
    if (!(lambda > 0.0 && lambda <= 1.0)) throw Error("Laplacian lambda must lie in (0, 1]");
    if (iterations < 0) throw Error("Laplacian iteration count must be >= 0");
    if (mesh.triangles.empty()) throw Error("Laplacian smoothing needs at least one triangle");
    const auto nb = vertex_neighbors(mesh);
    TriangleMesh out = mesh;
    out.normals.clear();
    std::vector<Vec3> next(out.vertices.size());
    for (int it = 0; it < iterations; ++it) {
        for (std::size_t v = 0; v < out.vertices.size(); ++v) {
            if (nb[v].empty()) {
                next[v] = out.vertices[v];
                continue;
            }
            Vec3 mean = Vec3::Zero();
            for (auto n : nb[v]) mean += out.vertices[n];
            mean /= static_cast<double>(nb[v].size());
            next[v] = out.vertices[v] + lambda * (mean - out.vertices[v]);
        }
        out.vertices.swap(next);
    }
    return out;
}

}  // namespace recon
