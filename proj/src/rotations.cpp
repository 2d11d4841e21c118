#include "mugl/rotations.hpp"

#include <cmath>

#include "mugl/errors.hpp"
#include "mugl/rng.hpp"

namespace mugl {

namespace {
constexpr double kDegenerateTol = 1e-8;
}

RotationMatrix rot6d_to_matrix(const Rotation6D& r) {
    const Eigen::Vector3d a1 = r.a1();
    const Eigen::Vector3d a2 = r.a2();

    const double n1 = a1.norm();
    if (n1 < kDegenerateTol) throw DegenerateInput("first 6D column has near-zero norm");
    const Eigen::Vector3d b1 = a1 / n1;

    const Eigen::Vector3d u2 = a2 - b1.dot(a2) * b1;
    const double n2 = u2.norm();
    if (n2 < kDegenerateTol) throw DegenerateInput("6D columns are collinear");
    const Eigen::Vector3d b2 = u2 / n2;

    RotationMatrix m;
    m.col(0) = b1;
    m.col(1) = b2;
    m.col(2) = b1.cross(b2);
    return m;
}

Rotation6D matrix_to_rot6d(const RotationMatrix& m) {
    if (!is_rotation(m, 1e-4)) throw InvalidRotation("matrix is not orthonormal with det +1");
    Rotation6D r;
    r.v = {m(0, 0), m(1, 0), m(2, 0), m(0, 1), m(1, 1), m(2, 1)};
    return r;
}

RotationMatrix random_rotation(std::uint64_t seed) {
    Rng rng(seed);
    const double z = rng.uniform(-1.0, 1.0);
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    const Eigen::Vector3d axis(s * std::cos(phi), s * std::sin(phi), z);
    const double angle = rng.uniform(0.0, M_PI);
    return axis_angle(axis, angle);
}

RotationMatrix axis_angle(const Eigen::Vector3d& axis, double angle) {
    const double n = axis.norm();
    if (n < kDegenerateTol) return RotationMatrix::Identity();
    const Eigen::Vector3d u = axis / n;
    const double c = std::cos(angle);
    const double s = std::sin(angle);

    Eigen::Matrix3d k;
    k << 0, -u.z(), u.y(), u.z(), 0, -u.x(), -u.y(), u.x(), 0;
    return RotationMatrix::Identity() + s * k + (1.0 - c) * (k * k);
}

bool is_rotation(const RotationMatrix& m, double tol) {
    const Eigen::Matrix3d gram = m.transpose() * m;
    if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) return false;
    return std::abs(m.determinant() - 1.0) <= tol;
}

} // namespace mugl
