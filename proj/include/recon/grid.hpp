#pragma once

#include "recon/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace recon {

/// Lattice extents, physical spacing and placement of a voxel grid.
///
/// The world position of voxel (i, j, k) is its center:
/// origin + (i * sx, j * sy, k * sz). Linear storage is x-fastest.
struct GridGeometry {
    std::array<std::int64_t, 3> dims{1, 1, 1};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};

    GridGeometry() = default;
    GridGeometry(std::array<std::int64_t, 3> d, Vec3 s, Vec3 o = Vec3::Zero())
        : dims(d), spacing(std::move(s)), origin(std::move(o)) {
        validate();
    }

    void validate() const {
        for (int a = 0; a < 3; ++a) {
            if (dims[a] < 1) {
                throw Error("grid dims must be >= 1 (axis " + std::to_string(a) + " is " +
                            std::to_string(dims[a]) + ")");
            }
            if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
                throw Error("grid spacing must be positive and finite (axis " + std::to_string(a) + ")");
            }
            if (!std::isfinite(origin[a])) throw Error("grid origin must be finite");
        }
    }

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
               static_cast<std::size_t>(dims[2]);
    }

    bool contains(const Index3& ijk) const {
        return ijk[0] >= 0 && ijk[1] >= 0 && ijk[2] >= 0 && ijk[0] < dims[0] && ijk[1] < dims[1] &&
               ijk[2] < dims[2];
    }

    std::size_t encode(const Index3& ijk) const {
        return static_cast<std::size_t>(ijk[0] + dims[0] * (ijk[1] + dims[1] * ijk[2]));
    }

    Index3 decode(std::size_t linear) const {
        const auto l = static_cast<std::int64_t>(linear);
        const std::int64_t i = l % dims[0];
        const std::int64_t j = (l / dims[0]) % dims[1];
        const std::int64_t k = l / (dims[0] * dims[1]);
        return {i, j, k};
    }

    Vec3 world(const Index3& ijk) const {
        return origin + Vec3(static_cast<double>(ijk[0]) * spacing[0], static_cast<double>(ijk[1]) * spacing[1],
                             static_cast<double>(ijk[2]) * spacing[2]);
    }

    /// Continuous index coordinates of a world point.
    Vec3 continuous_index(const Vec3& p) const { return (p - origin).cwiseQuotient(spacing); }

    /// Nearest lattice index of a world point (may be out of range).
    Index3 nearest_index(const Vec3& p) const {
        const Vec3 c = continuous_index(p);
        return {static_cast<std::int64_t>(std::llround(c[0])), static_cast<std::int64_t>(std::llround(c[1])),
                static_cast<std::int64_t>(std::llround(c[2]))};
    }

    /// World position of the geometric center of the lattice.
    Vec3 center() const {
        return origin + Vec3(0.5 * static_cast<double>(dims[0] - 1) * spacing[0],
                             0.5 * static_cast<double>(dims[1] - 1) * spacing[1],
                             0.5 * static_cast<double>(dims[2] - 1) * spacing[2]);
    }

    double voxel_volume() const { return spacing[0] * spacing[1] * spacing[2]; }

    friend bool operator==(const GridGeometry& a, const GridGeometry& b) {
        return a.dims == b.dims && a.spacing == b.spacing && a.origin == b.origin;
    }
};

/// Dense voxel grid with a fixed geometry. Immutable geometry, mutable values.
template <typename T>
class Grid {
public:
    using value_type = T;

    Grid() = default;
    explicit Grid(GridGeometry g, T fill = T{}) : geometry_(std::move(g)) {
        geometry_.validate();
        data_.assign(geometry_.voxel_count(), fill);
    }
    Grid(GridGeometry g, std::vector<T> data) : geometry_(std::move(g)), data_(std::move(data)) {
        geometry_.validate();
        if (data_.size() != geometry_.voxel_count()) {
            throw Error("grid payload has " + std::to_string(data_.size()) + " values, geometry needs " +
                        std::to_string(geometry_.voxel_count()));
        }
    }

    const GridGeometry& geometry() const { return geometry_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }
    T& at(const Index3& ijk) { return data_[geometry_.encode(ijk)]; }
    const T& at(const Index3& ijk) const { return data_[geometry_.encode(ijk)]; }

    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }

    friend bool operator==(const Grid& a, const Grid& b) {
        return a.geometry_ == b.geometry_ && a.data_ == b.data_;
    }

private:
    GridGeometry geometry_;
    std::vector<T> data_;
};

/// Signed 16-bit intensities (the scan stand-in).
using ScalarVolume = Grid<std::int16_t>;

/// Occupancy grid; each byte is 0 or 1.
using BinaryMask = Grid<std::uint8_t>;

inline std::size_t foreground_count(const BinaryMask& mask) {
    return static_cast<std::size_t>(
        std::count_if(mask.values().begin(), mask.values().end(), [](std::uint8_t v) { return v != 0; }));
}

/// Fraction of voxels that are foreground.
inline double foreground_fraction(const BinaryMask& mask) {
    if (mask.empty()) return 0.0;
    return static_cast<double>(foreground_count(mask)) / static_cast<double>(mask.size());
}

/// World centers of all foreground voxels, in linear order.
inline std::vector<Vec3> foreground_centers(const BinaryMask& mask) {
    std::vector<Vec3> out;
    const auto& g = mask.geometry();
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) out.push_back(g.world(g.decode(i)));
    }
    return out;
}

/// Lattice shift by an integer offset; vacated voxels become background.
template <typename T>
Grid<T> shift_lattice(const Grid<T>& in, const Index3& offset, T fill = T{}) {
    Grid<T> out(in.geometry(), fill);
    const auto& g = in.geometry();
    for (std::int64_t k = 0; k < g.dims[2]; ++k) {
        for (std::int64_t j = 0; j < g.dims[1]; ++j) {
            for (std::int64_t i = 0; i < g.dims[0]; ++i) {
                const Index3 src{i - offset[0], j - offset[1], k - offset[2]};
                if (g.contains(src)) out.at({i, j, k}) = in.at(src);
            }
        }
    }
    return out;
}

}  // namespace recon
