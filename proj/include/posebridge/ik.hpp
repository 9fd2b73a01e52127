// SPDX-License-Identifier: Apache-2.0
//
// Forward kinematics and constrained cyclic-coordinate-descent IK.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "posebridge/error.hpp"
#include "posebridge/math.hpp"
#include "posebridge/skeleton.hpp"

namespace posebridge {

struct Pose {
  std::vector<Vec3> positions;
  std::vector<Quat> world_rotations;
};

/// World positions and orientations of every joint. The root sits at the rig
/// origin; a joint's bone is rotated by its parent's world rotation.
inline Pose forward_kinematics(const AvatarRig& rig, const JointConfiguration& config) {
  if (static_cast<int>(config.rotations.size()) != rig.size())
    throw Error(ErrorCode::MissingJoint, "configuration has " + std::to_string(config.rotations.size()) +
                                             " rotations, rig has " + std::to_string(rig.size()) + " joints");
  Pose pose;
  pose.positions.resize(config.rotations.size());
  pose.world_rotations.resize(config.rotations.size());
  for (int i = 0; i < rig.size(); ++i) {
    const RigJoint& j = rig.joint(i);
    const auto k = static_cast<std::size_t>(i);
    if (j.parent < 0) {
      pose.positions[k] = {};
      pose.world_rotations[k] = config.rotations[k];
      continue;
    }
    const auto p = static_cast<std::size_t>(j.parent);
    pose.positions[k] = pose.positions[p] + pose.world_rotations[p].rotate(j.rest_direction * j.bone_length);
    pose.world_rotations[k] = pose.world_rotations[p] * config.rotations[k];
  }
  return pose;
}

// ---------------------------------------------------------------------------
// Constraint clamps

/// Pull `direction` back onto the cone boundary when it leaves the cone,
/// staying in the plane spanned by the cone axis and the direction.
inline Vec3 clamp_ball(const Vec3& direction, const BallConstraint& c) {
  const double angle = angle_between(direction, c.cone_axis);
  if (angle <= c.half_angle) return direction;
  const Vec3 perp = cross(c.cone_axis, direction);
  if (norm(perp) < 1e-9 && dot(direction, c.cone_axis) < 0)
    throw Error(ErrorCode::DegenerateDirection, "direction is antiparallel to the cone axis");
  const Vec3 axis = normalized(perp);
  return Quat::from_axis_angle(axis, c.half_angle).rotate(c.cone_axis);
}

inline double clamp_hinge(double angle, const HingeConstraint& c) noexcept {
  return std::min(std::max(angle, c.min_angle), c.max_angle);
}

/// Closest constraint-respecting local rotation. Hinge: project onto the
/// hinge axis first, then clamp the range. Ball: swing the constrained bone
/// back to the cone boundary, keeping its twist.
inline Quat project_to_constraint(const AvatarRig& rig, int joint, const Quat& local) {
  const RigJoint& j = rig.joint(joint);
  if (!j.constraint) return local;
  if (const auto* hinge = std::get_if<HingeConstraint>(&*j.constraint)) {
    const double twist = swing_twist(local, hinge->hinge_axis).twist_angle;
    return Quat::from_axis_angle(hinge->hinge_axis, clamp_hinge(twist, *hinge));
  }
  const auto& ball = std::get<BallConstraint>(*j.constraint);
  const Vec3 rest = rig.joint(j.primary_child).rest_direction;
  const Vec3 dir = local.rotate(rest);
  if (angle_between(dir, ball.cone_axis) <= ball.half_angle) return local;
  Vec3 clamped;
  try {
    clamped = clamp_ball(dir, ball);
  } catch (const Error&) {
    clamped = Quat::from_axis_angle(any_orthogonal(ball.cone_axis), ball.half_angle).rotate(ball.cone_axis);
  }
  return (Quat::between(dir, clamped) * local).normalized();
}

// ---------------------------------------------------------------------------
// Chains

/// Joints from the chain root down to (and including) the end effector. Every
/// joint but the last one rotates during a solve.
struct KinematicChain {
  std::vector<int> joints;
  double reach = 0.0;

  int end_effector() const { return joints.back(); }
  std::size_t bones() const { return joints.size() - 1; }
};

inline KinematicChain make_chain(const AvatarRig& rig, int chain_root, int end_effector) {
  if (chain_root < 0 || chain_root >= rig.size() || end_effector < 0 || end_effector >= rig.size())
    throw Error(ErrorCode::InvalidChain, "chain joint index out of range");
  KinematicChain chain;
  for (int j = end_effector; j != chain_root; j = rig.joint(j).parent) {
    if (j < 0)
      throw Error(ErrorCode::InvalidChain, "'" + rig.joint(chain_root).name + "' is not an ancestor of '" +
                                               rig.joint(end_effector).name + "'");
    chain.joints.push_back(j);
    chain.reach += rig.joint(j).bone_length;
  }
  chain.joints.push_back(chain_root);
  std::reverse(chain.joints.begin(), chain.joints.end());
  if (chain.joints.size() < 2) throw Error(ErrorCode::InvalidChain, "chain needs at least one bone");
  return chain;
}

struct IkOptions {
  int max_iterations = 200;
  std::optional<double> position_tolerance;  // default: 1e-3 x chain reach
};

struct IkResult {
  JointConfiguration configuration;
  double final_error = 0.0;
  int iterations_used = 0;
  bool converged = false;
};

namespace detail {

inline double effector_error(const AvatarRig& rig, const JointConfiguration& c, int effector, const Vec3& target) {
  return distance(forward_kinematics(rig, c).positions[static_cast<std::size_t>(effector)], target);
}

// Signed angle from a to b about unit axis n, both projected onto n's plane.
inline std::optional<double> signed_angle_about(const Vec3& a, const Vec3& b, const Vec3& n) {
  const Vec3 pa = a - n * dot(a, n);
  const Vec3 pb = b - n * dot(b, n);
  if (norm(pa) < 1e-12 || norm(pb) < 1e-12) return std::nullopt;
  return std::atan2(dot(cross(pa, pb), n), dot(pa, pb));
}

}  // namespace detail

namespace detail {

// One CCD pass from the effector back to the chain root: each joint turns to
// point the effector at the target and is projected onto its constraint.
// `joints` limits the pass to the first n rotating joints.
inline void ccd_pass(const AvatarRig& rig, const KinematicChain& chain, JointConfiguration& config,
                     const Vec3& target, std::size_t joints = SIZE_MAX) {
  const int effector = chain.end_effector();
  for (std::size_t k = std::min(joints, chain.bones()); k-- > 0;) {
    const int j = chain.joints[k];
    const RigJoint& joint = rig.joint(j);
    const Pose pose = forward_kinematics(rig, config);
    const Vec3 pivot = pose.positions[static_cast<std::size_t>(j)];
    const Vec3 to_effector = pose.positions[static_cast<std::size_t>(effector)] - pivot;
    const Vec3 to_target = target - pivot;
    const Quat parent_world =
        joint.parent < 0 ? Quat::identity() : pose.world_rotations[static_cast<std::size_t>(joint.parent)];
    auto& q = config.rotations[static_cast<std::size_t>(j)];

    if (joint.constraint && std::holds_alternative<HingeConstraint>(*joint.constraint)) {
      const auto& hinge = std::get<HingeConstraint>(*joint.constraint);
      const auto delta = signed_angle_about(to_effector, to_target, parent_world.rotate(hinge.hinge_axis));
      if (!delta) continue;
      const double twist = swing_twist(q, hinge.hinge_axis).twist_angle;
      q = Quat::from_axis_angle(hinge.hinge_axis, clamp_hinge(wrap_angle(twist + *delta), hinge));
      continue;
    }
    if (norm(to_effector) < 1e-12 || norm(to_target) < 1e-12) continue;
    // World-space turn, re-expressed in the parent frame.
    const Quat turn = Quat::between(to_effector, to_target);
    q = (parent_world.conjugate() * turn * parent_world * q).normalized();
    q = project_to_constraint(rig, j, q);
  }
}

// Reach matching: turns each inner joint so the effector's distance from the
// chain root equals the target's. Rotating the root cannot change that
// distance, so plain CCD stalls when an elbow starts straight against its
// limit; this step unbends it.
inline void reach_pass(const AvatarRig& rig, const KinematicChain& chain, JointConfiguration& config,
                       const Vec3& target) {
  const int effector = chain.end_effector();
  for (std::size_t k = chain.bones(); k-- > 1;) {
    const int j = chain.joints[k];
    const RigJoint& joint = rig.joint(j);
    const Pose pose = forward_kinematics(rig, config);
    const Vec3 root = pose.positions[static_cast<std::size_t>(chain.joints.front())];
    const Vec3 pivot = pose.positions[static_cast<std::size_t>(j)];
    const Vec3 r = pose.positions[static_cast<std::size_t>(effector)] - pivot;
    const Vec3 w = root - pivot;
    const double want = distance(target, root);
    const Quat parent_world =
        joint.parent < 0 ? Quat::identity() : pose.world_rotations[static_cast<std::size_t>(joint.parent)];
    const auto* hinge =
        joint.constraint ? std::get_if<HingeConstraint>(&*joint.constraint) : static_cast<const HingeConstraint*>(nullptr);

    Vec3 axis;
    if (hinge) {
      axis = parent_world.rotate(hinge->hinge_axis);
    } else {
      axis = cross(w, r);
      if (norm(axis) < 1e-12 * std::max(1.0, norm(w) * norm(r))) axis = cross(r, target - root);
      if (norm(axis) < 1e-12) axis = any_orthogonal(r);
      axis = normalized(axis);
    }
    // |r(a) - w|^2 = K - 2 (P cos a + Q sin a) for r rotated by a about axis.
    const Vec3 r_par = axis * dot(r, axis);
    const Vec3 r_perp = r - r_par;
    const double P = dot(r_perp, w);
    const double Q = dot(cross(axis, r_perp), w);
    const double K = dot(r, r) + dot(w, w) - 2.0 * dot(r_par, w);
    auto reach_error = [&](double a) {
      return std::abs(std::sqrt(std::max(0.0, K - 2.0 * (P * std::cos(a) + Q * std::sin(a)))) - want);
    };
    const double R = std::hypot(P, Q);
    if (R < 1e-12) continue;
    const double phi = std::atan2(Q, P);
    const double c = std::clamp((K - want * want) / (2.0 * R), -1.0, 1.0);
    std::vector<double> candidates{phi + std::acos(c), phi - std::acos(c), phi, phi + std::numbers::pi};

    const double twist = hinge ? swing_twist(config.rotations[static_cast<std::size_t>(j)], hinge->hinge_axis).twist_angle : 0.0;
    if (hinge) {
      candidates.push_back(hinge->min_angle - twist);
      candidates.push_back(hinge->max_angle - twist);
    }
    std::optional<double> best;
    double best_err = 0.0;
    for (double a : candidates) {
      a = wrap_angle(a);
      if (hinge) {
        const double t = twist + a;
        if (t < hinge->min_angle - 1e-12 || t > hinge->max_angle + 1e-12) continue;
      }
      const double e = reach_error(a);
      if (!best || e < best_err - 1e-15 || (e <= best_err + 1e-15 && std::abs(a) < std::abs(*best))) {
        best = a;
        best_err = e;
      }
    }
    if (!best || *best == 0.0) continue;
    auto& q = config.rotations[static_cast<std::size_t>(j)];
    if (hinge) {
      q = Quat::from_axis_angle(hinge->hinge_axis, clamp_hinge(twist + *best, *hinge));
    } else {
      const Quat local_turn = Quat::from_axis_angle(parent_world.conjugate().rotate(axis), *best);
      q = project_to_constraint(rig, j, (local_turn * q).normalized());
    }
  }
}

}  // namespace detail

/// Moves the chain's end effector toward `target` starting from `initial`.
/// Every sweep runs a CCD pass (effector back to root, each joint projected
/// onto its constraint right away) from the current configuration, and a
/// second candidate that matches the root-to-effector distance and then turns
/// only the root; the better one is kept. The best configuration seen is returned, so the error
/// never exceeds that of the (constraint-projected) starting configuration.
inline IkResult solve_ik(const AvatarRig& rig, const KinematicChain& chain, const JointConfiguration& initial,
                         const Vec3& target, const IkOptions& opts = {}) {
  if (opts.max_iterations < 1) throw Error(ErrorCode::ConfigError, "ik max_iterations must be >= 1");
  if (!is_finite(target)) throw Error(ErrorCode::NonFinite, "ik target is not finite");
  const double tolerance = opts.position_tolerance.value_or(1e-3 * chain.reach);
  if (!(tolerance > 0.0)) throw Error(ErrorCode::ConfigError, "ik tolerance must be positive");
  if (static_cast<int>(initial.rotations.size()) != rig.size())
    throw Error(ErrorCode::MissingJoint, "initial configuration does not cover the rig");

  JointConfiguration config = initial;
  for (std::size_t k = 0; k < chain.bones(); ++k) {
    const int j = chain.joints[k];
    auto& q = config.rotations[static_cast<std::size_t>(j)];
    if (constraint_violation(rig, j, q) > 0.0) q = project_to_constraint(rig, j, q);
  }

  const int effector = chain.end_effector();
  IkResult result{config, detail::effector_error(rig, config, effector, target), 0, false};
  if (result.final_error <= tolerance) {
    result.converged = true;
    return result;
  }

  int stalled = 0;
  for (int it = 1; it <= opts.max_iterations; ++it) {
    JointConfiguration plain = config;
    detail::ccd_pass(rig, chain, plain, target);
    JointConfiguration matched = config;
    detail::reach_pass(rig, chain, matched, target);
    detail::ccd_pass(rig, chain, matched, target, 1);
    const double e_plain = detail::effector_error(rig, plain, effector, target);
    const double e_matched = detail::effector_error(rig, matched, effector, target);
    const double err = std::min(e_plain, e_matched);
    config = e_matched < e_plain ? std::move(matched) : std::move(plain);

    result.iterations_used = it;
    if (err < result.final_error - 1e-15 * std::max(1.0, chain.reach)) {
      stalled = 0;
    } else if (++stalled >= 8) {
      break;  // pinned against a limit or the edge of reach
    }
    if (err < result.final_error) {
      result.configuration = config;
      result.final_error = err;
    }
    if (result.final_error <= tolerance) break;
  }
  result.converged = result.final_error <= tolerance;
  return result;
}

}  // namespace posebridge
