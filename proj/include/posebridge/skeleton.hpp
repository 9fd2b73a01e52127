// SPDX-License-Identifier: Apache-2.0
//
// Shared geometric and skeletal data model: landmark schemes, keypoint
// frames, avatar rigs with joint constraints, and joint configurations.
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "posebridge/error.hpp"
#include "posebridge/math.hpp"

namespace posebridge {

inline constexpr double kDefaultConfidenceThreshold = 0.5;

/// Camera-to-engine axis remap (x, y, z) -> (x, z, y). Applied once, at
/// ingestion, to data authored in a z-up convention. Never used by kernels.
constexpr Vec3 remap_axes(const Vec3& p) noexcept { return {p.x, p.z, p.y}; }

// ---------------------------------------------------------------------------
// Landmark schemes

class LandmarkScheme {
 public:
  LandmarkScheme(std::string name, std::vector<std::string> landmark_names)
      : name_(std::move(name)), names_(std::move(landmark_names)) {
    if (names_.empty()) throw Error(ErrorCode::InvalidScheme, "scheme '" + name_ + "' has no landmarks");
    if (names_.size() > 256) throw Error(ErrorCode::InvalidScheme, "more than 256 landmarks");
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (!index_.emplace(names_[i], static_cast<int>(i)).second)
        throw Error(ErrorCode::InvalidScheme, "duplicate landmark name '" + names_[i] + "'");
    }
  }

  const std::string& name() const noexcept { return name_; }
  int count() const noexcept { return static_cast<int>(names_.size()); }
  const std::string& landmark_name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& landmark_names() const noexcept { return names_; }

  std::optional<int> id_of(const std::string& landmark) const {
    auto it = index_.find(landmark);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::string name_;
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

using SchemePtr = std::shared_ptr<const LandmarkScheme>;

// ---------------------------------------------------------------------------
// Keypoint frames

enum class SpaceTag : std::uint8_t { Camera2d, Camera3d, World3d };

struct Keypoint {
  Vec3 position;
  double confidence = 0.0;

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct KeypointFrame {
  std::uint64_t timestamp_us = 0;
  std::uint32_t sequence = 0;
  SchemePtr scheme;  // may be null for frames decoded off the wire until bound
  SpaceTag space = SpaceTag::World3d;
  std::vector<Keypoint> points;
};

/// Returns the frame unchanged when it matches `scheme` and every point is
/// finite with confidence in [0, 1].
inline KeypointFrame validate_frame(const KeypointFrame& frame, const LandmarkScheme& scheme) {
  if (static_cast<int>(frame.points.size()) != scheme.count())
    throw Error(ErrorCode::SchemeMismatch, "frame has " + std::to_string(frame.points.size()) +
                                               " points, scheme '" + scheme.name() + "' expects " +
                                               std::to_string(scheme.count()));
  if (frame.scheme && frame.scheme->name() != scheme.name())
    throw Error(ErrorCode::SchemeMismatch, "frame scheme '" + frame.scheme->name() + "' != '" + scheme.name() + "'");
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    const Keypoint& kp = frame.points[i];
    if (!is_finite(kp.position))
      throw Error(ErrorCode::NonFinite, "landmark " + std::to_string(i) + " has a non-finite coordinate");
    if (!(kp.confidence >= 0.0 && kp.confidence <= 1.0))
      throw Error(ErrorCode::BadConfidence, "landmark " + std::to_string(i) + " confidence " +
                                                std::to_string(kp.confidence) + " outside [0, 1]");
  }
  return frame;
}

/// position[to] - position[from], requiring both endpoints to be confident.
inline Vec3 bone_vector(const KeypointFrame& frame, int from_id, int to_id,
                        double threshold = kDefaultConfidenceThreshold) {
  const auto n = static_cast<int>(frame.points.size());
  if (from_id < 0 || from_id >= n || to_id < 0 || to_id >= n)
    throw Error(ErrorCode::UnknownLandmark,
                "landmark id out of range: " + std::to_string(from_id) + " -> " + std::to_string(to_id));
  const Keypoint& a = frame.points[static_cast<std::size_t>(from_id)];
  const Keypoint& b = frame.points[static_cast<std::size_t>(to_id)];
  if (a.confidence < threshold || b.confidence < threshold)
    throw Error(ErrorCode::LowConfidence, "landmark " + std::to_string(a.confidence < threshold ? from_id : to_id) +
                                              " below confidence threshold");
  return b.position - a.position;
}

// ---------------------------------------------------------------------------
// Joint constraints

struct BallConstraint {
  Vec3 cone_axis;  // unit, in the parent joint frame
  double half_angle = 0.0;
};

struct HingeConstraint {
  Vec3 hinge_axis;  // unit
  double min_angle = 0.0;
  double max_angle = 0.0;
};

using JointConstraint = std::variant<BallConstraint, HingeConstraint>;

inline constexpr double kUnitTolerance = 1e-9;

inline BallConstraint make_ball(const Vec3& cone_axis, double half_angle) {
  if (!is_finite(cone_axis) || std::abs(norm(cone_axis) - 1.0) > kUnitTolerance)
    throw Error(ErrorCode::InvalidConstraint, "ball cone axis must be unit length");
  if (!(half_angle > 0.0 && half_angle < std::numbers::pi))
    throw Error(ErrorCode::InvalidConstraint, "ball half angle must lie in (0, pi)");
  return {cone_axis, half_angle};
}

inline HingeConstraint make_hinge(const Vec3& hinge_axis, double min_angle, double max_angle) {
  if (!is_finite(hinge_axis) || std::abs(norm(hinge_axis) - 1.0) > kUnitTolerance)
    throw Error(ErrorCode::InvalidConstraint, "hinge axis must be unit length");
  if (!(min_angle < max_angle))
    throw Error(ErrorCode::InvalidConstraint, "hinge range must satisfy min < max");
  if (!(min_angle > -std::numbers::pi && max_angle <= std::numbers::pi))
    throw Error(ErrorCode::InvalidConstraint, "hinge range must lie within (-pi, pi]");
  return {hinge_axis, min_angle, max_angle};
}

// ---------------------------------------------------------------------------
// Avatar rig

struct RigJoint {
  std::string name;
  int parent = -1;           // index into AvatarRig::joints(), -1 for the root
  double bone_length = 0.0;  // distance from parent; 0 for the root
  Vec3 rest_direction{0, 1, 0};  // unit, expressed in the parent joint frame
  std::optional<JointConstraint> constraint;
  int primary_child = -1;  // first child in file order; the bone a Ball constrains
};

/// Unvalidated joint description as read from a rig document.
struct RigJointSpec {
  std::string name;
  std::optional<std::string> parent;
  double bone_length = 0.0;
  Vec3 rest_direction{0, 1, 0};
  std::optional<JointConstraint> constraint;
};

enum class UpAxis { Y, Z };

/// Joint hierarchy stored parent-before-child. Coordinates are always in the
/// engine's y-up frame; z-up rigs are remapped once at construction.
class AvatarRig {
 public:
  static AvatarRig create(const std::vector<RigJointSpec>& specs, const std::vector<std::string>& end_effectors,
                          UpAxis up = UpAxis::Y) {
    if (specs.empty()) throw Error(ErrorCode::InvalidRig, "rig has no joints");
    std::unordered_map<std::string, std::size_t> by_name;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (specs[i].name.empty()) throw Error(ErrorCode::InvalidRig, "joint with empty name");
      if (!by_name.emplace(specs[i].name, i).second)
        throw Error(ErrorCode::InvalidRig, "duplicate joint name '" + specs[i].name + "'");
    }
    int roots = 0;
    for (const auto& s : specs) {
      if (!s.parent) {
        ++roots;
        continue;
      }
      if (!by_name.contains(*s.parent))
        throw Error(ErrorCode::InvalidRig, "joint '" + s.name + "' has unknown parent '" + *s.parent + "'");
      if (!(s.bone_length > 0.0) || !std::isfinite(s.bone_length))
        throw Error(ErrorCode::InvalidRig, "joint '" + s.name + "' has non-positive bone length");
      if (!is_finite(s.rest_direction) || std::abs(norm(s.rest_direction) - 1.0) > kUnitTolerance)
        throw Error(ErrorCode::InvalidRig, "joint '" + s.name + "' rest direction is not unit length");
    }
    if (roots != 1) throw Error(ErrorCode::InvalidRig, "rig must have exactly one root, found " + std::to_string(roots));

    // Breadth-first from the root; anything unreached sits on a cycle.
    std::vector<std::vector<std::size_t>> children(specs.size());
    std::size_t root = 0;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (specs[i].parent)
        children[by_name.at(*specs[i].parent)].push_back(i);
      else
        root = i;
    }
    std::vector<std::size_t> order{root};
    for (std::size_t k = 0; k < order.size(); ++k)
      for (std::size_t c : children[order[k]]) order.push_back(c);
    if (order.size() != specs.size()) throw Error(ErrorCode::InvalidRig, "joint parent links contain a cycle");

    AvatarRig rig;
    std::vector<int> new_index(specs.size(), -1);
    for (std::size_t k = 0; k < order.size(); ++k) new_index[order[k]] = static_cast<int>(k);
    for (std::size_t k = 0; k < order.size(); ++k) {
      const RigJointSpec& s = specs[order[k]];
      RigJoint j;
      j.name = s.name;
      j.parent = s.parent ? new_index[by_name.at(*s.parent)] : -1;
      j.bone_length = s.parent ? s.bone_length : 0.0;
      j.rest_direction = up == UpAxis::Z ? remap_axes(s.rest_direction) : s.rest_direction;
      if (s.constraint) {
        JointConstraint c = *s.constraint;
        if (up == UpAxis::Z) {
          // The remap is a reflection, so it flips rotation handedness.
          if (auto* ball = std::get_if<BallConstraint>(&c)) ball->cone_axis = remap_axes(ball->cone_axis);
          if (auto* hinge = std::get_if<HingeConstraint>(&c)) hinge->hinge_axis = -remap_axes(hinge->hinge_axis);
        }
        j.constraint = c;
      }
      if (!children[order[k]].empty()) j.primary_child = new_index[children[order[k]].front()];
      rig.joints_.push_back(std::move(j));
      rig.index_.emplace(s.name, static_cast<int>(k));
    }
    for (const auto& j : rig.joints_)
      if (j.constraint && std::holds_alternative<BallConstraint>(*j.constraint) && j.primary_child < 0)
        throw Error(ErrorCode::InvalidRig, "ball constraint on leaf joint '" + j.name + "'");
    for (const auto& e : end_effectors) {
      if (!rig.index_.contains(e)) throw Error(ErrorCode::InvalidRig, "unknown end effector '" + e + "'");
      rig.end_effectors_.push_back(rig.index_.at(e));
    }
    return rig;
  }

  const std::vector<RigJoint>& joints() const noexcept { return joints_; }
  const RigJoint& joint(int i) const { return joints_.at(static_cast<std::size_t>(i)); }
  int size() const noexcept { return static_cast<int>(joints_.size()); }
  const std::vector<int>& end_effectors() const noexcept { return end_effectors_; }

  std::optional<int> index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  int require(const std::string& name) const {
    auto i = index_of(name);
    if (!i) throw Error(ErrorCode::MissingJoint, "rig has no joint '" + name + "'");
    return *i;
  }

 private:
  std::vector<RigJoint> joints_;
  std::vector<int> end_effectors_;
  std::unordered_map<std::string, int> index_;
};

// ---------------------------------------------------------------------------
// Joint configurations

/// Per-joint unit quaternions relative to the parent joint frame, indexed like
/// AvatarRig::joints().
struct JointConfiguration {
  std::vector<Quat> rotations;
  std::uint64_t timestamp_us = 0;
  std::uint32_t sequence = 0;
  bool stale_flag = false;
};

inline JointConfiguration neutral_configuration(const AvatarRig& rig) {
  JointConfiguration c;
  c.rotations.assign(static_cast<std::size_t>(rig.size()), Quat::identity());
  return c;
}

/// How far `local` lies outside the joint's constraint (radians); 0 when
/// satisfied. Hinge violation combines off-axis swing and range overshoot.
inline double constraint_violation(const AvatarRig& rig, int joint, const Quat& local) {
  const RigJoint& j = rig.joint(joint);
  if (!j.constraint) return 0.0;
  if (const auto* ball = std::get_if<BallConstraint>(&*j.constraint)) {
    const Vec3 dir = local.rotate(rig.joint(j.primary_child).rest_direction);
    return std::max(0.0, angle_between(dir, ball->cone_axis) - ball->half_angle);
  }
  const auto& hinge = std::get<HingeConstraint>(*j.constraint);
  const SwingTwist st = swing_twist(local, hinge.hinge_axis);
  const double off_axis = st.swing.angle();
  const double over = std::max({0.0, hinge.min_angle - st.twist_angle, st.twist_angle - hinge.max_angle});
  return off_axis + over;
}

inline bool satisfies_constraints(const AvatarRig& rig, const JointConfiguration& config, double tolerance = 1e-6) {
  if (static_cast<int>(config.rotations.size()) != rig.size()) return false;
  for (int i = 0; i < rig.size(); ++i) {
    const Quat& q = config.rotations[static_cast<std::size_t>(i)];
    if (std::abs(q.norm() - 1.0) > tolerance) return false;
    if (constraint_violation(rig, i, q) > tolerance) return false;
  }
  return true;
}

}  // namespace posebridge
