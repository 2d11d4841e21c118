#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>

namespace mugl {

using RotationMatrix = Eigen::Matrix3d;

/// Two 3-vectors (a1, a2) holding the first two columns of a rotation matrix
/// before Gram-Schmidt orthonormalization. Stored flat as [a1; a2].
struct Rotation6D {
    std::array<double, 6> v{1, 0, 0, 0, 1, 0};

    Eigen::Vector3d a1() const { return {v[0], v[1], v[2]}; }
    Eigen::Vector3d a2() const { return {v[3], v[4], v[5]}; }

    static Rotation6D identity() { return {}; }
};

/// Gram-Schmidt the two stored columns and complete with their cross product.
/// Throws DegenerateInput when a1 vanishes or a2 is collinear with a1.
RotationMatrix rot6d_to_matrix(const Rotation6D& r);

/// Drop the third column. Throws InvalidRotation when `m` fails the
/// orthonormal / det +1 invariants beyond 1e-4.
Rotation6D matrix_to_rot6d(const RotationMatrix& m);

/// Deterministic random rotation: uniform axis, uniform angle in [0, pi].
RotationMatrix random_rotation(std::uint64_t seed);

/// Rodrigues formula. `axis` need not be normalized (zero axis gives identity).
RotationMatrix axis_angle(const Eigen::Vector3d& axis, double angle);

/// True when columns are orthonormal and det = +1 within `tol`.
bool is_rotation(const RotationMatrix& m, double tol);

} // namespace mugl
