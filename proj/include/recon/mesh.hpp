#pragma once

#include "recon/core.hpp"
#include "recon/rigid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <unordered_map>
#include <utility>
#include <vector>

namespace recon {

using Triangle = std::array<std::uint32_t, 3>;

/// Indexed triangle surface in world coordinates (mm).
struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<Triangle> triangles;
    std::vector<Vec3> normals;  // optional, per vertex

    bool empty() const { return triangles.empty(); }

    Vec3 face_normal_area_weighted(const Triangle& t) const {
        return 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
    }

    void validate() const {
        const auto n = vertices.size();
        for (const auto& t : triangles) {
            for (auto v : t) {
                if (v >= n) throw Error("triangle references vertex " + std::to_string(v) + " of " + std::to_string(n));
            }
        }
        if (!normals.empty() && normals.size() != n) throw Error("vertex normal count differs from vertex count");
    }
};

struct MeshStats {
    double area = 0.0;
    double signed_volume = 0.0;
    std::size_t boundary_edge_count = 0;   // edges used by exactly one triangle
    std::size_t nonmanifold_edge_count = 0;  // edges used by more than two triangles
    std::size_t edge_count = 0;
    std::int64_t euler_characteristic = 0;
};

namespace detail {

inline std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
}

/// Use count of every undirected edge.
inline std::unordered_map<std::uint64_t, std::uint32_t> edge_use(const TriangleMesh& mesh) {
    std::unordered_map<std::uint64_t, std::uint32_t> uses;
    uses.reserve(mesh.triangles.size() * 2);
    for (const auto& t : mesh.triangles) {
        for (int e = 0; e < 3; ++e) ++uses[edge_key(t[e], t[(e + 1) % 3])];
    }
    return uses;
}

}  // namespace detail

/// Area, enclosed signed volume (w.r.t. the origin), and topology counts.
/// Euler characteristic counts only vertices referenced by some triangle.
inline MeshStats mesh_stats(const TriangleMesh& mesh) {
    MeshStats s;
    for (const auto& t : mesh.triangles) {
        const Vec3& a = mesh.vertices[t[0]];
        const Vec3& b = mesh.vertices[t[1]];
        const Vec3& c = mesh.vertices[t[2]];
        s.area += 0.5 * (b - a).cross(c - a).norm();
        s.signed_volume += a.dot(b.cross(c)) / 6.0;
    }
    const auto uses = detail::edge_use(mesh);
    s.edge_count = uses.size();
    for (const auto& [key, n] : uses) {
        if (n == 1) ++s.boundary_edge_count;
        if (n > 2) ++s.nonmanifold_edge_count;
    }
    std::vector<char> used(mesh.vertices.size(), 0);
    for (const auto& t : mesh.triangles) {
        for (auto v : t) used[v] = 1;
    }
    const auto v = static_cast<std::int64_t>(std::count(used.begin(), used.end(), 1));
    s.euler_characteristic =
        v - static_cast<std::int64_t>(s.edge_count) + static_cast<std::int64_t>(mesh.triangles.size());
    return s;
}

/// Drops zero-area triangles and vertices no triangle references.
inline TriangleMesh remove_degenerate(const TriangleMesh& in) {
    TriangleMesh out;
    std::vector<std::int64_t> remap(in.vertices.size(), -1);
    for (const auto& t : in.triangles) {
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
        if (in.face_normal_area_weighted(t).squaredNorm() == 0.0) continue;
        Triangle nt{};
        for (int e = 0; e < 3; ++e) {
            if (remap[t[e]] < 0) {
                remap[t[e]] = static_cast<std::int64_t>(out.vertices.size());
                out.vertices.push_back(in.vertices[t[e]]);
                if (!in.normals.empty()) out.normals.push_back(in.normals[t[e]]);
            }
            nt[e] = static_cast<std::uint32_t>(remap[t[e]]);
        }
        out.triangles.push_back(nt);
    }
    return out;
}

inline TriangleMesh transformed(const TriangleMesh& mesh, const RigidTransform& t) {
    TriangleMesh out = mesh;
    for (auto& v : out.vertices) v = t(v);
    for (auto& n : out.normals) n = t.rotation * n;
    return out;
}

/// Area-weighted unit vertex normals.
inline std::vector<Vec3> vertex_normals(const TriangleMesh& mesh) {
    std::vector<Vec3> n(mesh.vertices.size(), Vec3::Zero());
    for (const auto& t : mesh.triangles) {
        const Vec3 fn = mesh.face_normal_area_weighted(t);
        for (auto v : t) n[v] += fn;
    }
    for (auto& v : n) {
        const double len = v.norm();
        if (len > 0.0) v /= len;
    }
    return n;
}

/// Icosahedron refined `subdivisions` times, vertices projected onto the sphere.
/// Outward (counter-clockwise seen from outside) winding.
inline TriangleMesh make_icosphere(const Vec3& center, double radius, int subdivisions) {
    if (!(radius > 0.0)) throw Error("icosphere radius must be positive");
    if (subdivisions < 0) throw Error("icosphere subdivisions must be >= 0");
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {{-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
                           {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
                           {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
    for (auto& p : v) p.normalize();
    std::vector<Triangle> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                               {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                               {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                               {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::uint64_t, std::uint32_t> mid;
        auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
            const auto key = detail::edge_key(a, b);
            if (auto it = mid.find(key); it != mid.end()) return it->second;
            v.push_back((v[a] + v[b]).normalized());
            const auto id = static_cast<std::uint32_t>(v.size() - 1);
            mid.emplace(key, id);
            return id;
        };
        std::vector<Triangle> next;
        next.reserve(f.size() * 4);
        for (const auto& t : f) {
            const auto a = midpoint(t[0], t[1]);
            const auto b = midpoint(t[1], t[2]);
            const auto c = midpoint(t[2], t[0]);
            next.push_back({t[0], a, c});
            next.push_back({t[1], b, a});
            next.push_back({t[2], c, b});
            next.push_back({a, b, c});
        }
        f = std::move(next);
    }
    TriangleMesh mesh;
    mesh.vertices.reserve(v.size());
    for (const auto& p : v) mesh.vertices.push_back(center + radius * p);
    mesh.triangles = std::move(f);
    return mesh;
}

/// Closed axis-aligned box with outward winding (8 vertices, 12 triangles).
inline TriangleMesh make_box_mesh(const Vec3& lo, const Vec3& hi) {
    TriangleMesh m;
    for (int k = 0; k < 2; ++k) {
        for (int j = 0; j < 2; ++j) {
            for (int i = 0; i < 2; ++i) {
                m.vertices.emplace_back(i ? hi[0] : lo[0], j ? hi[1] : lo[1], k ? hi[2] : lo[2]);
            }
        }
    }
    // vertex id = i + 2j + 4k
    m.triangles = {{0, 2, 3}, {0, 3, 1},   // z = lo
                   {4, 5, 7}, {4, 7, 6},   // z = hi
                   {0, 1, 5}, {0, 5, 4},   // y = lo
                   {2, 6, 7}, {2, 7, 3},   // y = hi
                   {0, 4, 6}, {0, 6, 2},   // x = lo
                   {1, 3, 7}, {1, 7, 5}};  // x = hi
    return m;
}

}  // namespace recon
