#pragma once

#include "recon/recon.hpp"


#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

namespace fixtures {

using namespace recon;

/// Isotropic grid with an odd voxel count per axis, centered on the world origin.
inline GridGeometry centered_grid(std::int64_t n, double spacing) {
    const double o = -0.5 * static_cast<double>(n - 1) * spacing;
    return GridGeometry({n, n, n}, Vec3::Constant(spacing), Vec3::Constant(o));
}

/// Icosphere with an asymmetric radial bump field, so rotations are observable.
inline TriangleMesh bumpy_sphere(const Vec3& center, double radius, int subdivisions) {
    TriangleMesh m = make_icosphere(Vec3::Zero(), 1.0, subdivisions);
    for (auto& v : m.vertices) {
        const Vec3 d = v.normalized();
        const double f = 1.0 + 0.18 * std::sin(3.0 * d.x() + 1.0) * std::cos(2.0 * d.y()) + 0.12 * d.z() * d.z() * d.z() +
                         0.08 * d.x() * d.y();
        v = center + radius * f * d;
    }
    return m;
}

/// One-voxel 6-neighborhood dilation.
inline BinaryMask dilate6(const BinaryMask& m) {
    BinaryMask out = m;
    const auto& g = m.geometry();
    const auto offs = neighbor_offsets(Connectivity::six);
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (!m[i]) continue;
        const Index3 c = g.decode(i);
        for (const auto& o : offs) {
            const Index3 n{c[0] + o[0], c[1] + o[1], c[2] + o[2]};
            if (g.contains(n)) out.at(n) = 1;
        }
    }
    return out;
}

inline BinaryMask random_mask(const GridGeometry& g, std::mt19937_64& rng, double p = 0.5) {
    std::bernoulli_distribution b(p);
    BinaryMask m(g, 0);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = b(rng) ? 1 : 0;
    return m;
}

inline Mat3 random_rotation(std::mt19937_64& rng, double max_angle_rad) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Vec3 axis = Vec3(n(rng), n(rng), n(rng)).normalized();
    return axis_angle(axis, max_angle_rad * u(rng));
}

inline Vec3 random_direction(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    return Vec3(n(rng), n(rng), n(rng)).normalized();
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("recon3d_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace fixtures
