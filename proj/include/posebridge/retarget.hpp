// SPDX-License-Identifier: Apache-2.0
//
// Basis-vector retargeting. A joint vector J is expressed relative to a basis
// vector B (for example the shoulder line): the horizontal (x, z) part of J is
// rotated so that B's horizontal part lies on +x, and every component is
// divided by B's horizontal length. The resulting normalized joint is heading
// and scale independent, so it can be re-expressed against the avatar's own
// basis B' by the inverse rotation and scale.
//
// Rotation convention: planar rotations act on column vectors (a, b) taken
// from (x, z); rotate(t) maps (a, b) to (a cos t - b sin t, a sin t + b cos t).
// Normalization applies rotate(-theta_B), reconstruction applies
// rotate(+theta_B'). Heights (y) are scaled only.
#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "posebridge/error.hpp"
#include "posebridge/math.hpp"
#include "posebridge/skeleton.hpp"

namespace posebridge {

inline constexpr double kDefaultBasisEpsilon = 1e-6;

struct Planar {
  double a = 0.0;  // x
  double b = 0.0;  // z
};

inline Planar rotate_planar(const Planar& v, double theta) noexcept {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {v.a * c - v.b * s, v.a * s + v.b * c};
}

inline double planar_norm(const Planar& v) noexcept { return std::hypot(v.a, v.b); }

struct BasisFrame {
  double theta = 0.0;
  double scale = 1.0;
  Vec3 source_basis{1, 0, 0};
};

struct NormalizedJoint {
  Vec3 value;
};

/// Angle and horizontal length of a basis vector. Fails when the basis is
/// (nearly) vertical, e.g. shoulders seen edge-on from above.
inline BasisFrame basis_frame(const Vec3& basis, double epsilon = kDefaultBasisEpsilon) {
  if (!is_finite(basis)) throw Error(ErrorCode::NonFinite, "basis vector is not finite");
  const double scale = std::hypot(basis.x, basis.z);
  if (!(scale >= epsilon))
    throw Error(ErrorCode::DegenerateBasis, "basis horizontal length " + std::to_string(scale) + " below epsilon");
  return {std::atan2(basis.z, basis.x), scale, basis};
}

inline NormalizedJoint normalize_joint(const Vec3& joint, const BasisFrame& bf) noexcept {
  const Planar p = rotate_planar({joint.x, joint.z}, -bf.theta);
  return {{p.a / bf.scale, joint.y / bf.scale, p.b / bf.scale}};
}

inline Vec3 denormalize_joint(const NormalizedJoint& jn, const BasisFrame& engine_basis) noexcept {
  const Planar p = rotate_planar({jn.value.x, jn.value.z}, engine_basis.theta);
  return {p.a * engine_basis.scale, jn.value.y * engine_basis.scale, p.b * engine_basis.scale};
}

// ---------------------------------------------------------------------------
// Retarget maps

/// A source endpoint is one landmark or the centroid of several (e.g. mid-hip).
struct LandmarkRef {
  std::vector<int> ids;
};

struct LimbEntry {
  std::string name;
  LandmarkRef basis_from, basis_to;  // source basis B
  int rig_basis_from = -1, rig_basis_to = -1;  // avatar basis B'
  LandmarkRef joint_from, joint_to;  // source joint vector J
  int anchor = -1;        // rig joint where J' starts
  int end_effector = -1;  // rig joint J' points to
  int chain_root = -1;    // first rotating joint of the IK chain
};

class RetargetMap {
 public:
  RetargetMap() = default;
  explicit RetargetMap(std::vector<LimbEntry> entries) : entries_(std::move(entries)) {}
  const std::vector<LimbEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::vector<LimbEntry> entries_;
};

/// Resolved landmark position; confidence is the weakest member's.
inline Keypoint resolve(const KeypointFrame& frame, const LandmarkRef& ref) {
  Keypoint out{{}, 1.0};
  for (int id : ref.ids) {
    if (id < 0 || id >= static_cast<int>(frame.points.size()))
      throw Error(ErrorCode::UnknownLandmark, "landmark id " + std::to_string(id) + " out of range");
    const Keypoint& kp = frame.points[static_cast<std::size_t>(id)];
    out.position += kp.position;
    out.confidence = std::min(out.confidence, kp.confidence);
  }
  out.position = out.position / static_cast<double>(ref.ids.size());
  return out;
}

inline Vec3 limb_vector(const KeypointFrame& frame, const LandmarkRef& from, const LandmarkRef& to, double threshold) {
  const Keypoint a = resolve(frame, from);
  const Keypoint b = resolve(frame, to);
  if (a.confidence < threshold || b.confidence < threshold)
    throw Error(ErrorCode::LowConfidence, "limb endpoint below confidence threshold");
  return b.position - a.position;
}

/// Source-side half of retargeting for one limb.
inline NormalizedJoint normalize_limb(const KeypointFrame& frame, const LimbEntry& limb,
                                      double threshold = kDefaultConfidenceThreshold,
                                      double epsilon = kDefaultBasisEpsilon) {
  const Vec3 b = limb_vector(frame, limb.basis_from, limb.basis_to, threshold);
  const Vec3 j = limb_vector(frame, limb.joint_from, limb.joint_to, threshold);
  return normalize_joint(j, basis_frame(b, epsilon));
}

/// Engine-side offset J' for one limb against the avatar's current pose.
inline Vec3 limb_offset(const LimbEntry& limb, const NormalizedJoint& jn, const std::vector<Vec3>& rig_positions,
                        double epsilon = kDefaultBasisEpsilon) {
  const Vec3 b_engine = rig_positions.at(static_cast<std::size_t>(limb.rig_basis_to)) -
                        rig_positions.at(static_cast<std::size_t>(limb.rig_basis_from));
  return denormalize_joint(jn, basis_frame(b_engine, epsilon));
}

/// Per-limb outcome of source-side normalization. `failure` is set when the
/// limb was skipped for this frame.
struct LimbSample {
  std::optional<NormalizedJoint> joint;
  std::optional<ErrorCode> failure;
};

/// Normalized joints for every limb of a frame, aligned with the map entries.
/// This is what travels from the retarget stage to the IK stage.
struct NormalizedPose {
  std::uint64_t timestamp_us = 0;
  std::uint32_t sequence = 0;
  std::vector<LimbSample> limbs;
};

inline NormalizedPose normalize_pose(const KeypointFrame& frame, const RetargetMap& map,
                                     double threshold = kDefaultConfidenceThreshold,
                                     double epsilon = kDefaultBasisEpsilon) {
  NormalizedPose pose{frame.timestamp_us, frame.sequence, {}};
  pose.limbs.reserve(map.size());
  bool any = false;
  for (const LimbEntry& limb : map.entries()) {
    try {
      pose.limbs.push_back({normalize_limb(frame, limb, threshold, epsilon), std::nullopt});
      any = true;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::LowConfidence && e.code() != ErrorCode::DegenerateBasis) throw;
      pose.limbs.push_back({std::nullopt, e.code()});
    }
  }
  if (!any) throw Error(ErrorCode::EmptyResult, "no limb could be normalized in frame " + std::to_string(frame.sequence));
  return pose;
}

struct LimbTarget {
  std::size_t limb = 0;  // index into the map
  int end_effector = -1;
  Vec3 offset;  // J' relative to the anchor joint
  Vec3 target;  // anchor position + offset
};

struct SkippedLimb {
  std::size_t limb = 0;
  ErrorCode reason = ErrorCode::LowConfidence;
};

struct RetargetResult {
  std::vector<LimbTarget> targets;
  std::vector<SkippedLimb> skipped;
};

/// Full retarget of one frame against a fixed avatar pose. Limbs that are
/// occluded or have a degenerate basis are reported in `skipped`.
inline RetargetResult retarget_frame(const KeypointFrame& frame, const RetargetMap& map,
                                     const std::vector<Vec3>& rig_positions,
                                     double threshold = kDefaultConfidenceThreshold,
                                     double epsilon = kDefaultBasisEpsilon) {
  RetargetResult result;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const LimbEntry& limb = map.entries()[i];
    try {
      const Vec3 offset = limb_offset(limb, normalize_limb(frame, limb, threshold, epsilon), rig_positions, epsilon);
      const Vec3 anchor = rig_positions.at(static_cast<std::size_t>(limb.anchor));
      result.targets.push_back({i, limb.end_effector, offset, anchor + offset});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::LowConfidence && e.code() != ErrorCode::DegenerateBasis) throw;
      result.skipped.push_back({i, e.code()});
    }
  }
  if (result.targets.empty())
    throw Error(ErrorCode::EmptyResult, "no limb could be retargeted in frame " + std::to_string(frame.sequence));
  return result;
}

}  // namespace posebridge
