// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "posebridge/documents.hpp"
#include "posebridge/ik.hpp"

using namespace posebridge;

namespace {

constexpr double kPi = std::numbers::pi;
const Vec3 kPlaneNormal{0, -1, 0};  // positive angles turn +x toward +z

void expect_near(const Vec3& a, const Vec3& b, double tol) {
  EXPECT_NEAR(a.x, b.x, tol);
  EXPECT_NEAR(a.y, b.y, tol);
  EXPECT_NEAR(a.z, b.z, tol);
}

// base (root) -> elbow -> tip, unit bones along +x.
AvatarRig two_link(std::optional<JointConstraint> elbow = std::nullopt) {
  return AvatarRig::create({{"base", std::nullopt, 0, {1, 0, 0}, std::nullopt},
                            {"elbow", "base", 1.0, {1, 0, 0}, elbow},
                            {"tip", "elbow", 1.0, {1, 0, 0}, std::nullopt}},
                           {"tip"});
}

JointConfiguration planar(const AvatarRig& rig, double base, double elbow) {
  JointConfiguration c = neutral_configuration(rig);
  c.rotations[0] = Quat::from_axis_angle(kPlaneNormal, base);
  c.rotations[1] = Quat::from_axis_angle(kPlaneNormal, elbow);
  return c;
}

}  // namespace

TEST(ForwardKinematics, IdentityIsRestPose) {
  const AvatarRig rig = two_link();
  const Pose p = forward_kinematics(rig, neutral_configuration(rig));
  expect_near(p.positions[2], {2, 0, 0}, 0);
}

TEST(ForwardKinematics, YawHalfTurn) {
  const AvatarRig rig = AvatarRig::create(
      {{"root", std::nullopt, 0, {1, 0, 0}, std::nullopt}, {"end", "root", 2.0, {1, 0, 0}, std::nullopt}}, {"end"});
  JointConfiguration c = neutral_configuration(rig);
  c.rotations[0] = Quat::from_axis_angle({0, 1, 0}, kPi);
  expect_near(forward_kinematics(rig, c).positions[1], {-2, 0, 0}, 1e-15);
}

TEST(ForwardKinematics, TwoLinkRightAngle) {
  const AvatarRig rig = two_link();
  expect_near(forward_kinematics(rig, planar(rig, 0, kPi / 2)).positions[2], {1, 0, 1}, 1e-15);
}

TEST(ForwardKinematics, MissingJoint) {
  const AvatarRig rig = two_link();
  JointConfiguration c = neutral_configuration(rig);
  c.rotations.pop_back();
  EXPECT_THROW(forward_kinematics(rig, c), Error);
}

TEST(ForwardKinematics, ReachBoundAndDeterminism) {
  const AvatarRig rig = load_rig(POSEBRIDGE_DATA_DIR "/rigs/default_rig.json");
  const KinematicChain arm = make_chain(rig, rig.require("left_shoulder"), rig.require("left_wrist"));
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int i = 0; i < 200; ++i) {
    JointConfiguration c = neutral_configuration(rig);
    for (auto& q : c.rotations) q = Quat::from_rotation_vector({u(rng), u(rng), u(rng)});
    const Pose a = forward_kinematics(rig, c);
    const Pose b = forward_kinematics(rig, c);
    EXPECT_EQ(a.positions, b.positions);
    EXPECT_LE(distance(a.positions[static_cast<std::size_t>(arm.joints.front())],
                       a.positions[static_cast<std::size_t>(arm.end_effector())]),
              arm.reach + 1e-9);
  }
}

TEST(ClampBall, InsideConeUnchanged) {
  const BallConstraint c = make_ball({0, 1, 0}, kPi / 4);
  const Vec3 d = normalized(Vec3{0.1, 1, 0});
  EXPECT_EQ(clamp_ball(d, c), d);
}

TEST(ClampBall, PullsToConeBoundaryInSharedPlane) {
  const BallConstraint c = make_ball({0, 1, 0}, kPi / 4);
  expect_near(clamp_ball({1, 0, 0}, c), Vec3{1, 1, 0} / std::sqrt(2.0), 1e-12);
}

TEST(ClampBall, AntiparallelIsDegenerate) {
  const BallConstraint c = make_ball({0, 1, 0}, kPi / 4);
  try {
    clamp_ball({0, -1, 0}, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateDirection);
  }
}

TEST(ClampBall, RandomDirectionsLandInConeIdempotently) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> h(0.05, 3.0);
  for (int i = 0; i < 2000; ++i) {
    const BallConstraint c = make_ball(normalized(Vec3{g(rng), g(rng), g(rng)}), h(rng));
    const Vec3 d = normalized(Vec3{g(rng), g(rng), g(rng)});
    const Vec3 once = clamp_ball(d, c);
    EXPECT_LE(angle_between(once, c.cone_axis), c.half_angle + 1e-9);
    expect_near(clamp_ball(once, c), once, 1e-12);
  }
}

TEST(ClampHinge, ClampsToRange) {
  const HingeConstraint c = make_hinge({1, 0, 0}, -0.5, 1.0);
  EXPECT_EQ(clamp_hinge(0.2, c), 0.2);
  EXPECT_EQ(clamp_hinge(1.3, c), 1.0);
  EXPECT_EQ(clamp_hinge(-0.8, c), -0.5);
}

TEST(ProjectToConstraint, HingeDropsOffAxisPartThenClamps) {
  const AvatarRig rig = two_link(make_hinge(kPlaneNormal, 0.0, kPi / 3));
  const Quat off_axis = Quat::from_axis_angle({1, 0, 0}, 0.3) * Quat::from_axis_angle(kPlaneNormal, 2.0);
  const Quat q = project_to_constraint(rig, 1, off_axis);
  EXPECT_LT(constraint_violation(rig, 1, q), 1e-12);
  EXPECT_NEAR(swing_twist(q, kPlaneNormal).twist_angle, kPi / 3, 1e-12);
}

TEST(MakeChain, RequiresAncestor) {
  const AvatarRig rig = load_rig(POSEBRIDGE_DATA_DIR "/rigs/default_rig.json");
  EXPECT_THROW(make_chain(rig, rig.require("left_hip"), rig.require("left_wrist")), Error);
  const KinematicChain c = make_chain(rig, rig.require("left_shoulder"), rig.require("left_wrist"));
  EXPECT_EQ(c.bones(), 2u);
  EXPECT_NEAR(c.reach, 0.53, 1e-12);
}

TEST(SolveIk, AlreadyAtTargetTakesNoIterations) {
  const AvatarRig rig = two_link();
  const KinematicChain chain = make_chain(rig, 0, 2);
  const JointConfiguration start = planar(rig, 0.3, 0.9);
  const Vec3 target = forward_kinematics(rig, start).positions[2];
  const IkResult r = solve_ik(rig, chain, start, target);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations_used, 0);
  for (std::size_t i = 0; i < start.rotations.size(); ++i) EXPECT_EQ(r.configuration.rotations[i].w, start.rotations[i].w);
}

TEST(SolveIk, FullExtension) {
  const AvatarRig rig = two_link();
  const KinematicChain chain = make_chain(rig, 0, 2);
  IkOptions opts;
  opts.position_tolerance = 1e-7;
  opts.max_iterations = 2000;
  const IkResult r = solve_ik(rig, chain, planar(rig, 0.4, 1.2), {2, 0, 0}, opts);
  EXPECT_LE(r.final_error, 1e-6);
  const Pose p = forward_kinematics(rig, r.configuration);
  expect_near(p.positions[1], {1, 0, 0}, 1e-3);
}

TEST(SolveIk, RightAngleMatchesAnalyticElbow) {
  const AvatarRig rig = two_link();
  const KinematicChain chain = make_chain(rig, 0, 2);
  const IkResult r = solve_ik(rig, chain, neutral_configuration(rig), {1, 0, 1});
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.final_error, 1e-3);
  // Elbow lands at (1,0,0) or (0,0,1): base angle 0 or pi/2.
  const Vec3 elbow = forward_kinematics(rig, r.configuration).positions[1];
  const double base = std::atan2(elbow.z, elbow.x);
  EXPECT_LT(std::min(std::abs(base), std::abs(base - kPi / 2)), 2e-3);
}

TEST(SolveIk, LimitedHingeReachesGridOptimum) {
  // Frozen from tests/oracles/ik_grid_search.py
  constexpr double kGridMinimum = 0.317837245196;
  const AvatarRig rig = two_link(make_hinge(kPlaneNormal, 0.0, kPi / 3));
  const KinematicChain chain = make_chain(rig, 0, 2);
  const IkResult r = solve_ik(rig, chain, neutral_configuration(rig), {1, 0, 1});
  EXPECT_FALSE(r.converged);
  EXPECT_LE(r.final_error, kGridMinimum * 1.02);
  EXPECT_TRUE(satisfies_constraints(rig, r.configuration));
}

TEST(SolveIk, UnreachableIsBestEffortAndNeverWorse) {
  const AvatarRig rig = two_link(make_hinge(kPlaneNormal, -2.0, 2.0));
  const KinematicChain chain = make_chain(rig, 0, 2);
  const JointConfiguration start = planar(rig, 0.5, 0.5);
  const Vec3 target{0, 5, 0};
  const double before = distance(forward_kinematics(rig, start).positions[2], target);
  const IkResult r = solve_ik(rig, chain, start, target);
  EXPECT_FALSE(r.converged);
  EXPECT_LE(r.final_error, before);
  EXPECT_NEAR(r.final_error, 3.0, 1e-3);
}

TEST(SolveIk, FeasibleTargetsOnTheDefaultArm) {
  const AvatarRig rig = load_rig(POSEBRIDGE_DATA_DIR "/rigs/default_rig.json");
  const int shoulder = rig.require("left_shoulder");
  const int wrist = rig.require("left_wrist");
  const KinematicChain chain = make_chain(rig, shoulder, wrist);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  int converged = 0;
  for (int i = 0; i < 200; ++i) {
    JointConfiguration q = neutral_configuration(rig);
    q.rotations[static_cast<std::size_t>(shoulder)] =
        project_to_constraint(rig, shoulder, Quat::from_rotation_vector({u(rng), u(rng), u(rng)}));
    const int elbow = rig.require("left_elbow");
    q.rotations[static_cast<std::size_t>(elbow)] =
        project_to_constraint(rig, elbow, Quat::from_rotation_vector({u(rng), u(rng), u(rng)}));
    const Vec3 target = forward_kinematics(rig, q).positions[static_cast<std::size_t>(wrist)];
    const IkResult r = solve_ik(rig, chain, neutral_configuration(rig), target);
    EXPECT_TRUE(satisfies_constraints(rig, r.configuration));
    converged += r.converged;
  }
  EXPECT_EQ(converged, 200);
}
