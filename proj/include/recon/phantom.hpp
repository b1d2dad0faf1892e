#pragma once

#include "recon/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>

namespace recon {

enum class PhantomKind { sphere, shell };

inline std::string to_string(PhantomKind k) { return k == PhantomKind::sphere ? "sphere" : "shell"; }

/// Two-plateau synthetic object centered on the grid center.
struct PhantomSpec {
    PhantomKind kind = PhantomKind::sphere;
    double radius_mm = 10.0;  // outer radius for shells
    double wall_mm = 0.5;     // shells only
    GridGeometry geometry;
    double fg_mean = 1000.0;
    double bg_mean = 0.0;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

namespace detail {

inline void check_fits(const GridGeometry& g, const Vec3& center, double radius) {
    for (int a = 0; a < 3; ++a) {
        const double lo = g.origin[a] + 2.0 * g.spacing[a];
        const double hi = g.origin[a] + static_cast<double>(g.dims[a] - 3) * g.spacing[a];
        if (center[a] - radius < lo || center[a] + radius > hi) {
            throw Error("phantom of radius " + std::to_string(radius) + " mm does not fit in the grid with a 2-voxel margin (axis " +
                        std::to_string(a) + ")");
        }
    }
}

/// Membership test for the phantom's ideal foreground at a voxel center.
inline bool inside_phantom(const PhantomSpec& s, const Vec3& center, const Vec3& p) {
    const double d = (p - center).norm();
    if (s.kind == PhantomKind::sphere) return d <= s.radius_mm;
    return d <= s.radius_mm && d >= s.radius_mm - s.wall_mm;
}

inline void validate(const PhantomSpec& s) {
    s.geometry.validate();
    if (!(s.radius_mm > 0.0)) throw Error("phantom radius must be positive");
    if (s.kind == PhantomKind::shell && !(s.wall_mm > 0.0 && s.wall_mm < s.radius_mm)) {
        throw Error("shell wall must satisfy 0 < wall < outer radius");
    }
    if (s.fg_mean == s.bg_mean) throw Error("phantom foreground and background means must differ");
    if (!(s.noise_sigma >= 0.0)) throw Error("noise sigma must be >= 0");
    check_fits(s.geometry, s.geometry.center(), s.radius_mm);
}

inline std::int16_t clamp_i16(double v) {
    const double r = std::nearbyint(v);
    return static_cast<std::int16_t>(std::clamp(r, static_cast<double>(std::numeric_limits<std::int16_t>::min()),
                                                static_cast<double>(std::numeric_limits<std::int16_t>::max())));
}

}  // namespace detail

/// Noise-free occupancy of the phantom's ideal shape.
inline BinaryMask phantom_truth_mask(const PhantomSpec& spec) {
    detail::validate(spec);
    const auto& g = spec.geometry;
    const Vec3 c = g.center();
    BinaryMask mask(g, 0);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = detail::inside_phantom(spec, c, g.world(g.decode(i))) ? 1 : 0;
    }
    return mask;
}

/// Plateau intensities plus i.i.d. Gaussian noise (mt19937_64, x-fastest draw order),
/// rounded and clamped to the int16 range.
inline ScalarVolume make_phantom(const PhantomSpec& spec) {
    const BinaryMask truth = phantom_truth_mask(spec);
    ScalarVolume vol(spec.geometry, 0);
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0.0 ? spec.noise_sigma : 1.0);
    for (std::size_t i = 0; i < vol.size(); ++i) {
        double v = truth[i] ? spec.fg_mean : spec.bg_mean;
        if (spec.noise_sigma > 0.0) v += noise(rng);
        vol[i] = detail::clamp_i16(v);
    }
    return vol;
}

inline ScalarVolume make_sphere_phantom(double radius_mm, const GridGeometry& geometry, double fg_mean, double bg_mean,
                                        double noise_sigma, std::uint64_t seed) {
    PhantomSpec s;
    s.kind = PhantomKind::sphere;
    s.radius_mm = radius_mm;
    s.geometry = geometry;
    s.fg_mean = fg_mean;
    s.bg_mean = bg_mean;
    s.noise_sigma = noise_sigma;
    s.seed = seed;
    return make_phantom(s);
}

inline ScalarVolume make_shell_phantom(double outer_radius_mm, double wall_mm, const GridGeometry& geometry,
                                       double fg_mean, double bg_mean, double noise_sigma, std::uint64_t seed) {
    PhantomSpec s;
    s.kind = PhantomKind::shell;
    s.radius_mm = outer_radius_mm;
    s.wall_mm = wall_mm;
    s.geometry = geometry;
    s.fg_mean = fg_mean;
    s.bg_mean = bg_mean;
    s.noise_sigma = noise_sigma;
    s.seed = seed;
    return make_phantom(s);
}

}  // namespace recon
