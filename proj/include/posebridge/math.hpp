// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <ostream>

namespace posebridge {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3& operator+=(const Vec3& o) noexcept {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr Vec3& operator-=(const Vec3& o) noexcept {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  constexpr Vec3& operator*=(double s) noexcept {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }

  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

constexpr Vec3 operator+(Vec3 a, const Vec3& b) noexcept { return a += b; }
constexpr Vec3 operator-(Vec3 a, const Vec3& b) noexcept { return a -= b; }
constexpr Vec3 operator-(const Vec3& a) noexcept { return {-a.x, -a.y, -a.z}; }
constexpr Vec3 operator*(Vec3 a, double s) noexcept { return a *= s; }
constexpr Vec3 operator*(double s, Vec3 a) noexcept { return a *= s; }
constexpr Vec3 operator/(const Vec3& a, double s) noexcept { return {a.x / s, a.y / s, a.z / s}; }

constexpr double dot(const Vec3& a, const Vec3& b) noexcept { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) noexcept {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) noexcept { return std::sqrt(dot(a, a)); }
inline double distance(const Vec3& a, const Vec3& b) noexcept { return norm(a - b); }
inline bool is_finite(const Vec3& a) noexcept {
  return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}
inline Vec3 normalized(const Vec3& a) noexcept { return a / norm(a); }

/// Unsigned angle between two non-zero vectors, stable near 0 and pi.
inline double angle_between(const Vec3& a, const Vec3& b) noexcept {
  return std::atan2(norm(cross(a, b)), dot(a, b));
}

/// Any unit vector orthogonal to `a` (a non-zero).
inline Vec3 any_orthogonal(const Vec3& a) noexcept {
  const Vec3 helper = std::abs(a.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  return normalized(cross(a, helper));
}

inline std::ostream& operator<<(std::ostream& os, const Vec3& v) {
  return os << '(' << v.x << ", " << v.y << ", " << v.z << ')';
}

/// Row-major 3x3 matrix.
struct Mat3 {
  std::array<std::array<double, 3>, 3> m{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

  static constexpr Mat3 identity() noexcept { return {}; }

  constexpr Vec3 row(int i) const noexcept { return {m[i][0], m[i][1], m[i][2]}; }

  constexpr Mat3 transposed() const noexcept {
    Mat3 t;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) t.m[i][j] = m[j][i];
    return t;
  }

  constexpr double determinant() const noexcept {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  }
};

constexpr Vec3 operator*(const Mat3& a, const Vec3& v) noexcept {
  return {a.m[0][0] * v.x + a.m[0][1] * v.y + a.m[0][2] * v.z,
          a.m[1][0] * v.x + a.m[1][1] * v.y + a.m[1][2] * v.z,
          a.m[2][0] * v.x + a.m[2][1] * v.y + a.m[2][2] * v.z};
}

constexpr Mat3 operator*(const Mat3& a, const Mat3& b) noexcept {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      r.m[i][j] = 0.0;
      for (int k = 0; k < 3; ++k) r.m[i][j] += a.m[i][k] * b.m[k][j];
    }
  return r;
}

/// Unit quaternion rotation. All joint rotations in the engine use this
/// single parameterization; axis-angle is only a serialization format.
struct Quat {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static constexpr Quat identity() noexcept { return {}; }

  static Quat from_axis_angle(const Vec3& unit_axis, double angle) noexcept {
    const double s = std::sin(angle * 0.5);
    return {std::cos(angle * 0.5), unit_axis.x * s, unit_axis.y * s, unit_axis.z * s};
  }

  /// Rotation vector (axis * angle, angle in [0, pi]).
  static Quat from_rotation_vector(const Vec3& rv) noexcept {
    const double angle = posebridge::norm(rv);
    if (angle < 1e-15) return {1.0, rv.x * 0.5, rv.y * 0.5, rv.z * 0.5};
    return from_axis_angle(rv / angle, angle);
  }

  /// Smallest rotation taking direction `from` onto direction `to`.
  static Quat between(const Vec3& from, const Vec3& to) noexcept {
    const Vec3 a = posebridge::normalized(from);
    const Vec3 b = posebridge::normalized(to);
    const double c = dot(a, b);
    if (c < -1.0 + 1e-12) return from_axis_angle(any_orthogonal(a), std::numbers::pi);
    const Vec3 axis = cross(a, b);
    return Quat{1.0 + c, axis.x, axis.y, axis.z}.normalized();
  }

  Vec3 vec() const noexcept { return {x, y, z}; }

  double norm() const noexcept { return std::sqrt(w * w + x * x + y * y + z * z); }

  Quat normalized() const noexcept {
    const double n = norm();
    return {w / n, x / n, y / n, z / n};
  }

  constexpr Quat conjugate() const noexcept { return {w, -x, -y, -z}; }

  /// Rotation angle in [0, pi].
  double angle() const noexcept {
    return 2.0 * std::atan2(posebridge::norm(vec()), std::abs(w));
  }

  /// Rotation vector with angle in [0, pi] (sign of w canonicalized).
  Vec3 rotation_vector() const noexcept {
    const Quat q = w < 0 ? Quat{-w, -x, -y, -z} : *this;
    const double s = posebridge::norm(q.vec());
    if (s < 1e-15) return q.vec() * 2.0;
    return q.vec() * (2.0 * std::atan2(s, q.w) / s);
  }

  Vec3 rotate(const Vec3& v) const noexcept {
    // v + 2w (u x v) + 2 u x (u x v)
    const Vec3 u = vec();
    const Vec3 t = cross(u, v) * 2.0;
    return v + t * w + cross(u, t);
  }

  Mat3 to_matrix() const noexcept {
    Mat3 r;
    r.m[0] = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)};
    r.m[1] = {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)};
    r.m[2] = {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)};
    return r;
  }
};

constexpr Quat operator*(const Quat& a, const Quat& b) noexcept {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

/// Swing-twist split of `q` about `unit_axis`: q == swing * twist, where
/// twist rotates about unit_axis only. Returns the signed twist angle in
/// (-pi, pi] and the swing rotation.
struct SwingTwist {
  Quat swing;
  double twist_angle = 0.0;
};

inline SwingTwist swing_twist(const Quat& q, const Vec3& unit_axis) noexcept {
  const double proj = dot(q.vec(), unit_axis);
  Quat twist{q.w, unit_axis.x * proj, unit_axis.y * proj, unit_axis.z * proj};
  const double n = twist.norm();
  if (n < 1e-15) {
    // pure 180 degree swing perpendicular to the axis
    return {q, 0.0};
  }
  twist = Quat{twist.w / n, twist.x / n, twist.y / n, twist.z / n};
  double angle = 2.0 * std::atan2(proj / n, twist.w);
  if (angle > std::numbers::pi) angle -= 2.0 * std::numbers::pi;
  if (angle <= -std::numbers::pi) angle += 2.0 * std::numbers::pi;
  return {q * twist.conjugate(), angle};
}

/// Wrap an angle into (-pi, pi].
inline double wrap_angle(double a) noexcept {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

}  // namespace posebridge
