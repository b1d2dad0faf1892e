#pragma once

#include "recon/core.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace recon {

/// Proper rigid motion x -> R x + t (no scale, no reflection).
struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static RigidTransform identity() { return {}; }

    Vec3 operator()(const Vec3& p) const { return rotation * p + translation; }

    Eigen::Matrix4d homogeneous() const {
        Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
        m.topLeftCorner<3, 3>() = rotation;
        m.topRightCorner<3, 1>() = translation;
        return m;
    }
};

/// compose(a, b)(x) == a(b(x)).
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
    return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

inline RigidTransform invert(const RigidTransform& t) {
    const Mat3 rt = t.rotation.transpose();
    return {rt, -(rt * t.translation)};
}

/// Closest proper rotation to m in the Frobenius sense.
inline Mat3 orthonormalize(const Mat3& m) {
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 d = Mat3::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
    return svd.matrixU() * d * svd.matrixV().transpose();
}

/// Rotation of `angle` radians about `axis` (need not be unit).
inline Mat3 axis_angle(const Vec3& axis, double angle) {
    const double n = axis.norm();
    if (n == 0.0) return Mat3::Identity();
    return Eigen::AngleAxisd(angle, axis / n).toRotationMatrix();
}

/// Rotation from a rotation vector (axis * angle).
inline Mat3 rotation_from_vector(const Vec3& w) { return axis_angle(w, w.norm()); }

/// Intrinsic x-y-z Euler angles in degrees: R = Rx(a) * Ry(b) * Rz(c).
inline Mat3 euler_xyz_deg(const Vec3& deg) {
    return (Eigen::AngleAxisd(deg_to_rad(deg[0]), Vec3::UnitX()) *
            Eigen::AngleAxisd(deg_to_rad(deg[1]), Vec3::UnitY()) *
            Eigen::AngleAxisd(deg_to_rad(deg[2]), Vec3::UnitZ()))
        .toRotationMatrix();
}

/// Geodesic angle (radians) between two rotations.
inline double rotation_angle_between(const Mat3& a, const Mat3& b) {
    const double c = std::clamp(((a.transpose() * b).trace() - 1.0) * 0.5, -1.0, 1.0);
    // acos loses precision near 0; recover small angles from the skew part.
    const Mat3 r = a.transpose() * b;
    const Vec3 s(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    return std::atan2(0.5 * s.norm(), c);
}

/// Rotation about `pivot` followed by a translation.
inline RigidTransform rotate_about(const Mat3& rotation, const Vec3& pivot, const Vec3& translation) {
    return {rotation, pivot - rotation * pivot + translation};
}

}  // namespace recon
