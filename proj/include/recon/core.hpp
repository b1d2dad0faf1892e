#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace recon {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Integer lattice coordinate (i, j, k) of a voxel.
using Index3 = std::array<std::int64_t, 3>;

/// A ratio that may be undefined (zero denominator). Never silently zero.
using Ratio = std::optional<double>;

/// Base error for every rejected input in the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised by file readers and writers.
class IoError : public Error {
public:
    using Error::Error;
};

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace recon
