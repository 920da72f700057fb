#pragma once

// Core rotation/pose math on SO(3) and SE(3): Rodrigues rotation, pose
// composition, component metrics and least-squares rigid alignment.
// Rotations are stored as plain 3x3 matrices; everything here is a value
// type and safe to use concurrently.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace posekit {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;

/// Thrown when an input violates a geometric precondition (non-unit axis,
/// rank-deficient point set, ...).
class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline bool is_unit(const Vec3& v, double tol = 1e-9) {
  return std::abs(v.norm() - 1.0) <= tol;
}

inline void require_unit(const Vec3& v, const char* what) {
  if (!is_unit(v)) throw GeometryError(std::string(what) + ": axis must be unit length");
}

}  // namespace detail

/// Element of SO(3). The matrix is expected to keep orthonormal columns and
/// det +1; checked factories validate to 1e-9, composition of valid
/// rotations is trusted.
struct Rotation {
  Mat3 m = Mat3::Identity();

  static Rotation identity() { return {}; }

  /// Validating factory: ||R^T R - I||_F <= tol and det(R) = 1 +- tol.
  static Rotation from_matrix(const Mat3& m, double tol = 1e-9) {
    const double ortho = (m.transpose() * m - Mat3::Identity()).norm();
    const double det = m.determinant();
    if (ortho > tol || std::abs(det - 1.0) > tol)
      throw GeometryError("Rotation::from_matrix: matrix is not a proper rotation");
    return Rotation{m};
  }

  Rotation transposed() const { return Rotation{m.transpose()}; }

  Vec3 operator*(const Vec3& v) const { return m * v; }
  Rotation operator*(const Rotation& o) const { return Rotation{m * o.m}; }

  double trace() const { return m.trace(); }
};

/// Rigid motion in SE(3); maps a point p to rotation * p + translation.
struct Pose {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
};

/// Rotates v about a unit axis by the given angle (radians).
/// When v is orthogonal to the axis the third term vanishes identically.
inline Vec3 rodrigues_rotate(const Vec3& v, const Vec3& axis, double angle) {
  detail::require_unit(axis, "rodrigues_rotate");
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return v * c + axis.cross(v) * s + axis * (axis.dot(v)) * (1.0 - c);
}

/// Matrix form of the axis-angle rotation: I + sin(a) K + (1 - cos(a)) K^2
/// with K the cross-product matrix of the unit axis.
inline Rotation rotation_from_axis_angle(const Vec3& axis, double angle) {
  detail::require_unit(axis, "rotation_from_axis_angle");
  Mat3 k;
  k << 0.0, -axis.z(), axis.y(),
       axis.z(), 0.0, -axis.x(),
       -axis.y(), axis.x(), 0.0;
  const Mat3 m = Mat3::Identity() + std::sin(angle) * k + (1.0 - std::cos(angle)) * (k * k);
  return Rotation{m};
}

/// Minimal geodesic angle between two rotations, in [0, pi].
/// The arccos argument is clamped: floating-point traces can exceed the
/// mathematical range by ~1e-8 and would otherwise yield NaN.
inline double geodesic_distance(const Rotation& r1, const Rotation& r2) {
  const double t = (r1.m.transpose() * r2.m).trace();
  const double arg = std::clamp((t - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(arg);
}

/// Euclidean distance between two translations.
inline double translation_distance(const Vec3& t1, const Vec3& t2) {
  return (t1 - t2).norm();
}

/// apply(compose(a, b), p) == apply(a, apply(b, p)).
inline Pose compose(const Pose& a, const Pose& b) {
  return Pose{a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

inline Pose invert(const Pose& a) {
  const Rotation rt = a.rotation.transposed();
  return Pose{rt, -(rt * a.translation)};
}

inline Vec3 apply(const Pose& a, const Vec3& p) {
  return a.rotation * p + a.translation;
}

/// Relative pose of `estimate` with respect to `truth`; its translation norm
/// and rotation angle are the usual pose error components.
inline Pose relative_pose(const Pose& estimate, const Pose& truth) {
  return compose(invert(truth), estimate);
}

/// Least-squares rigid fit: returns the pose minimizing
/// sum_i ||T(src[i]) - dst[i]||^2, with reflections excluded.
/// Requires >= 3 non-collinear points.
inline Pose rigid_align(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size())
    throw GeometryError("rigid_align: source and destination sizes differ");
  if (src.size() < 3)
    throw GeometryError("rigid_align: need at least 3 point pairs");

  const double n = static_cast<double>(src.size());
  Vec3 src_mean = Vec3::Zero();
  Vec3 dst_mean = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    src_mean += src[i];
    dst_mean += dst[i];
  }
  src_mean /= n;
  dst_mean /= n;

  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i)
    h += (src[i] - src_mean) * (dst[i] - dst_mean).transpose();

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sigma = svd.singularValues();
  // Rank < 2 means the points are collinear or coincident and the rotation
  // is not determined.
  if (sigma(1) <= 1e-9 * std::max(sigma(0), 1e-300))
    throw GeometryError("rigid_align: degenerate (collinear or coincident) configuration");

  Mat3 d = Mat3::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Mat3 r = svd.matrixV() * d * svd.matrixU().transpose();
  return Pose{Rotation{r}, dst_mean - r * src_mean};
}

inline Pose rigid_align(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  return rigid_align(std::span<const Vec3>(src), std::span<const Vec3>(dst));
}

}  // namespace posekit
