// SPDX-License-Identifier: Apache-2.0
//
// Two-view lifting of 2D keypoints to world-frame 3D keypoints.
// Pinhole cameras, no lens distortion.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "posebridge/error.hpp"
#include "posebridge/math.hpp"
#include "posebridge/skeleton.hpp"

namespace posebridge {

inline constexpr double kMinBaseline = 1e-3;

struct CameraModel {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  Mat3 rotation;     // world -> camera
  Vec3 translation;  // world -> camera

  Vec3 center() const noexcept { return -(rotation.transposed() * translation); }

  Vec3 to_camera(const Vec3& world) const noexcept { return rotation * world + translation; }

  /// Pixel coordinates of a world point (the point must be in front).
  std::array<double, 2> project(const Vec3& world) const noexcept {
    const Vec3 c = to_camera(world);
    return {fx * c.x / c.z + cx, fy * c.y / c.z + cy};
  }

  /// World-frame direction of the ray through pixel (u, v).
  Vec3 ray(double u, double v) const noexcept {
    return rotation.transposed() * Vec3{(u - cx) / fx, (v - cy) / fy, 1.0};
  }
};

inline void validate_camera(const CameraModel& cam, const std::string& label) {
  if (!(cam.fx > 0.0) || !(cam.fy > 0.0))
    throw Error(ErrorCode::ParseError, label + ": focal lengths must be positive");
  if (!std::isfinite(cam.cx) || !std::isfinite(cam.cy) || !is_finite(cam.translation))
    throw Error(ErrorCode::ParseError, label + ": non-finite intrinsics or translation");
  const Mat3 rrt = cam.rotation * cam.rotation.transposed();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (!(std::abs(rrt.m[i][j] - (i == j ? 1.0 : 0.0)) <= 1e-9))
        throw Error(ErrorCode::NonOrthonormalRotation, label + ": rotation is not orthonormal");
  if (cam.rotation.determinant() < 0.0)
    throw Error(ErrorCode::NonOrthonormalRotation, label + ": rotation is a reflection");
}

class CameraPair {
 public:
  CameraPair(CameraModel a, CameraModel b) : a_(std::move(a)), b_(std::move(b)) {
    validate_camera(a_, "camera_a");
    validate_camera(b_, "camera_b");
    baseline_ = distance(a_.center(), b_.center());
    if (!(baseline_ > kMinBaseline))
      throw Error(ErrorCode::DegenerateGeometry, "camera centers coincide (baseline " + std::to_string(baseline_) + ")");
  }

  const CameraModel& a() const noexcept { return a_; }
  const CameraModel& b() const noexcept { return b_; }
  double baseline() const noexcept { return baseline_; }
  CameraPair swapped() const { return CameraPair(b_, a_); }

 private:
  CameraModel a_, b_;
  double baseline_ = 0.0;
};

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;
  double confidence = 1.0;
};

struct Triangulation {
  Vec3 point;
  double reprojection_error = 0.0;  // mean pixel residual over both views
};

inline double reprojection_error(const Vec3& x, const PixelPoint& pa, const PixelPoint& pb, const CameraPair& pair) {
  const auto ua = pair.a().project(x);
  const auto ub = pair.b().project(x);
  return 0.5 * (std::hypot(ua[0] - pa.u, ua[1] - pa.v) + std::hypot(ub[0] - pb.u, ub[1] - pb.v));
}

/// Linear least-squares intersection of the two back-projected rays.
inline Triangulation triangulate(const PixelPoint& pa, const PixelPoint& pb, const CameraPair& pair) {
  const Vec3 ra = pair.a().ray(pa.u, pa.v);
  const Vec3 rb = pair.b().ray(pb.u, pb.v);
  if (norm(cross(normalized(ra), normalized(rb))) < 1e-9)
    throw Error(ErrorCode::DegenerateRays, "back-projected rays are parallel");

  // Two rows per view: (xn * r3 - r1) . X = t1 - xn * t3, likewise for y.
  std::array<std::array<double, 3>, 4> rows{};
  std::array<double, 4> rhs{};
  int r = 0;
  for (const auto& [cam, px] : {std::pair{&pair.a(), &pa}, std::pair{&pair.b(), &pb}}) {
    const double xn = (px->u - cam->cx) / cam->fx;
    const double yn = (px->v - cam->cy) / cam->fy;
    const Vec3 r1 = cam->rotation.row(0), r2 = cam->rotation.row(1), r3 = cam->rotation.row(2);
    const Vec3 row_x = r3 * xn - r1;
    const Vec3 row_y = r3 * yn - r2;
    rows[static_cast<std::size_t>(r)] = {row_x.x, row_x.y, row_x.z};
    rhs[static_cast<std::size_t>(r++)] = cam->translation.x - xn * cam->translation.z;
    rows[static_cast<std::size_t>(r)] = {row_y.x, row_y.y, row_y.z};
    rhs[static_cast<std::size_t>(r++)] = cam->translation.y - yn * cam->translation.z;
  }

  // Normal equations, solved by Gaussian elimination with partial pivoting.
  std::array<std::array<long double, 4>, 3> m{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 4; ++k) m[i][j] += static_cast<long double>(rows[k][i]) * rows[k][j];
    for (int k = 0; k < 4; ++k) m[i][3] += static_cast<long double>(rows[k][i]) * rhs[k];
  }
  for (int c = 0; c < 3; ++c) {
    int pivot = c;
    for (int i = c + 1; i < 3; ++i)
      if (std::abs(m[i][c]) > std::abs(m[pivot][c])) pivot = i;
    if (std::abs(m[pivot][c]) < 1e-300L) throw Error(ErrorCode::DegenerateRays, "singular triangulation system");
    std::swap(m[c], m[pivot]);
    for (int i = 0; i < 3; ++i) {
      if (i == c) continue;
      const long double f = m[i][c] / m[c][c];
      for (int j = c; j < 4; ++j) m[i][j] -= f * m[c][j];
    }
  }
  const Vec3 x{static_cast<double>(m[0][3] / m[0][0]), static_cast<double>(m[1][3] / m[1][1]),
               static_cast<double>(m[2][3] / m[2][2])};
  return {x, reprojection_error(x, pa, pb, pair)};
}

struct LiftOptions {
  std::uint64_t sync_window_us = 20'000;
  double confidence_threshold = kDefaultConfidenceThreshold;
};

/// Triangulates every landmark of two synchronized 2D frames (x = u, y = v).
/// Landmarks weak in either view, or with parallel rays, come out with
/// confidence 0 at the origin.
inline KeypointFrame lift_frame(const KeypointFrame& fa, const KeypointFrame& fb, const CameraPair& pair,
                                const LiftOptions& opts = {}) {
  if (fa.points.size() != fb.points.size() || (fa.scheme && fb.scheme && fa.scheme->name() != fb.scheme->name()))
    throw Error(ErrorCode::SchemeMismatch, "stereo frames use different landmark schemes");
  const std::uint64_t gap = fa.timestamp_us > fb.timestamp_us ? fa.timestamp_us - fb.timestamp_us
                                                              : fb.timestamp_us - fa.timestamp_us;
  if (gap > opts.sync_window_us)
    throw Error(ErrorCode::SyncWindowExceeded, "stereo frames " + std::to_string(gap) + " us apart");

  KeypointFrame out;
  out.timestamp_us = fa.timestamp_us / 2 + fb.timestamp_us / 2 + (fa.timestamp_us % 2 + fb.timestamp_us % 2) / 2;
  out.sequence = fa.sequence;
  out.scheme = fa.scheme ? fa.scheme : fb.scheme;
  out.space = SpaceTag::World3d;
  out.points.resize(fa.points.size());
  for (std::size_t i = 0; i < fa.points.size(); ++i) {
    const Keypoint& a = fa.points[i];
    const Keypoint& b = fb.points[i];
    const double conf = std::min(a.confidence, b.confidence);
    if (conf < opts.confidence_threshold) continue;
    try {
      const Triangulation t =
          triangulate({a.position.x, a.position.y, a.confidence}, {b.position.x, b.position.y, b.confidence}, pair);
      out.points[i] = {t.point, conf};
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateRays) throw;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Calibration documents

namespace detail {

inline CameraModel parse_camera(const nlohmann::json& j, const std::string& label) {
  try {
    CameraModel cam;
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.width = j.value("width", 0);
    cam.height = j.value("height", 0);
    const auto& rot = j.at("rotation");
    if (!rot.is_array() || rot.size() != 3) throw Error(ErrorCode::ParseError, label + ": rotation must be 3x3");
    for (int i = 0; i < 3; ++i) {
      if (!rot[i].is_array() || rot[i].size() != 3) throw Error(ErrorCode::ParseError, label + ": rotation must be 3x3");
      for (int k = 0; k < 3; ++k) cam.rotation.m[i][k] = rot[i][k].get<double>();
    }
    const auto& t = j.at("translation");
    if (!t.is_array() || t.size() != 3) throw Error(ErrorCode::ParseError, label + ": translation must have 3 entries");
    cam.translation = {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()};
    return cam;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, label + ": " + e.what());
  }
}

}  // namespace detail

/// Parses {"camera_a": {...}, "camera_b": {...}} where each camera carries
/// fx, fy, cx, cy, width, height, rotation (3x3, world->camera, row-major)
/// and translation (world->camera).
inline CameraPair load_calibration(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("camera_a") || !doc.contains("camera_b"))
    throw Error(ErrorCode::ParseError, "calibration needs camera_a and camera_b objects");
  return CameraPair(detail::parse_camera(doc["camera_a"], "camera_a"), detail::parse_camera(doc["camera_b"], "camera_b"));
}

inline CameraPair load_calibration(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("calibration is not valid JSON: ") + e.what());
  }
  return load_calibration(doc);
}

}  // namespace posebridge
