// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "posebridge/documents.hpp"
#include "posebridge/skeleton.hpp"

using namespace posebridge;

namespace {

SchemePtr mediapipe() { return load_scheme(POSEBRIDGE_DATA_DIR "/schemes/mediapipe33.json"); }

KeypointFrame frame_for(const SchemePtr& scheme) {
  KeypointFrame f;
  f.scheme = scheme;
  f.space = SpaceTag::World3d;
  f.points.resize(static_cast<std::size_t>(scheme->count()));
  for (std::size_t i = 0; i < f.points.size(); ++i) f.points[i] = {{0.1 * i, 1.0, -0.2 * i}, 0.9};
  return f;
}

template <class Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::ConfigError;
}

}  // namespace

TEST(Schemes, ShippedSchemesLoad) {
  EXPECT_EQ(mediapipe()->count(), 33);
  EXPECT_EQ(mediapipe()->landmark_name(11), "left_shoulder");
  EXPECT_EQ(mediapipe()->id_of("right_foot_index"), 32);
  const auto coco = load_scheme(POSEBRIDGE_DATA_DIR "/schemes/coco17.json");
  EXPECT_EQ(coco->count(), 17);
}

TEST(Schemes, RejectsSparseIds) {
  const auto doc = nlohmann::json::parse(R"({"name":"x","landmarks":[{"id":0,"name":"a"},{"id":2,"name":"b"}]})");
  EXPECT_EQ(code_of([&] { parse_scheme(doc); }), ErrorCode::InvalidScheme);
}

TEST(Schemes, RejectsDuplicateNames) {
  const auto doc = nlohmann::json::parse(R"({"name":"x","landmarks":[{"id":0,"name":"a"},{"id":1,"name":"a"}]})");
  EXPECT_EQ(code_of([&] { parse_scheme(doc); }), ErrorCode::InvalidScheme);
}

TEST(ValidateFrame, ValidFrameIsReturnedUnchanged) {
  const auto scheme = mediapipe();
  const KeypointFrame f = frame_for(scheme);
  const KeypointFrame out = validate_frame(f, *scheme);
  ASSERT_EQ(out.points.size(), f.points.size());
  for (std::size_t i = 0; i < f.points.size(); ++i) {
    EXPECT_EQ(out.points[i].position, f.points[i].position);
    EXPECT_EQ(out.points[i].confidence, f.points[i].confidence);
  }
}

TEST(ValidateFrame, SeventeenPointsAgainstThirtyThreeIsSchemeMismatch) {
  const auto scheme = mediapipe();
  KeypointFrame f = frame_for(scheme);
  f.points.resize(17);
  f.scheme = nullptr;
  EXPECT_EQ(code_of([&] { validate_frame(f, *scheme); }), ErrorCode::SchemeMismatch);
}

TEST(ValidateFrame, ConfidenceAboveOneIsBadConfidence) {
  const auto scheme = mediapipe();
  KeypointFrame f = frame_for(scheme);
  f.points[4].confidence = 1.5;
  EXPECT_EQ(code_of([&] { validate_frame(f, *scheme); }), ErrorCode::BadConfidence);
}

TEST(ValidateFrame, NanCoordinateIsNonFinite) {
  const auto scheme = mediapipe();
  KeypointFrame f = frame_for(scheme);
  f.points[2].position.y = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(code_of([&] { validate_frame(f, *scheme); }), ErrorCode::NonFinite);
}

TEST(RemapAxes, SwapsSecondAndThird) {
  EXPECT_EQ(remap_axes({1, 2, 3}), (Vec3{1, 3, 2}));
  EXPECT_EQ(remap_axes({0, 0, 0}), (Vec3{0, 0, 0}));
}

TEST(RemapAxes, InvolutionPreservingNorm) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 p{u(rng), u(rng), u(rng)};
    EXPECT_EQ(remap_axes(remap_axes(p)), p);
    EXPECT_DOUBLE_EQ(norm(remap_axes(p)), norm(p));
  }
}

TEST(BoneVector, DifferenceOfEndpoints) {
  const auto scheme = mediapipe();
  KeypointFrame f = frame_for(scheme);
  f.points[0].position = {0, 0, 0};
  f.points[1].position = {1, 2, 3};
  EXPECT_EQ(bone_vector(f, 0, 1), (Vec3{1, 2, 3}));
  EXPECT_EQ(bone_vector(f, 1, 1), (Vec3{0, 0, 0}));
  EXPECT_EQ(bone_vector(f, 1, 0), -bone_vector(f, 0, 1));
}

TEST(BoneVector, WeakEndpointIsLowConfidence) {
  const auto scheme = mediapipe();
  KeypointFrame f = frame_for(scheme);
  f.points[1].confidence = 0.1;
  EXPECT_EQ(code_of([&] { bone_vector(f, 0, 1, 0.5); }), ErrorCode::LowConfidence);
  EXPECT_EQ(code_of([&] { bone_vector(f, 0, 40); }), ErrorCode::UnknownLandmark);
}

TEST(Constraints, RejectInvalidParameters) {
  EXPECT_EQ(code_of([] { make_ball({0, 2, 0}, 0.5); }), ErrorCode::InvalidConstraint);
  EXPECT_EQ(code_of([] { make_ball({0, 1, 0}, 0.0); }), ErrorCode::InvalidConstraint);
  EXPECT_EQ(code_of([] { make_ball({0, 1, 0}, std::numbers::pi); }), ErrorCode::InvalidConstraint);
  EXPECT_EQ(code_of([] { make_hinge({1, 0, 0}, 0.5, 0.5); }), ErrorCode::InvalidConstraint);
  EXPECT_EQ(code_of([] { make_hinge({1, 0, 0}, -4.0, 0.5); }), ErrorCode::InvalidConstraint);
}

TEST(Rig, DefaultRigLoads) {
  const AvatarRig rig = load_rig(POSEBRIDGE_DATA_DIR "/rigs/default_rig.json");
  EXPECT_EQ(rig.size(), 17);
  EXPECT_EQ(rig.joint(0).name, "hips");
  for (int i = 1; i < rig.size(); ++i) EXPECT_LT(rig.joint(i).parent, i);
  EXPECT_EQ(rig.end_effectors().size(), 5u);
}

TEST(Rig, RejectsCycleDuplicateAndBadLength) {
  const std::vector<RigJointSpec> cycle{
      {"root", std::nullopt, 0, {0, 1, 0}, std::nullopt},
      {"a", "b", 1, {0, 1, 0}, std::nullopt},
      {"b", "a", 1, {0, 1, 0}, std::nullopt},
  };
  EXPECT_EQ(code_of([&] { AvatarRig::create(cycle, {}); }), ErrorCode::InvalidRig);
  const std::vector<RigJointSpec> dup{
      {"root", std::nullopt, 0, {0, 1, 0}, std::nullopt},
      {"a", "root", 1, {0, 1, 0}, std::nullopt},
      {"a", "root", 1, {0, 1, 0}, std::nullopt},
  };
  EXPECT_EQ(code_of([&] { AvatarRig::create(dup, {}); }), ErrorCode::InvalidRig);
  const std::vector<RigJointSpec> zero{
      {"root", std::nullopt, 0, {0, 1, 0}, std::nullopt},
      {"a", "root", 0.0, {0, 1, 0}, std::nullopt},
  };
  EXPECT_EQ(code_of([&] { AvatarRig::create(zero, {}); }), ErrorCode::InvalidRig);
  const std::vector<RigJointSpec> two_roots{
      {"r1", std::nullopt, 0, {0, 1, 0}, std::nullopt},
      {"r2", std::nullopt, 0, {0, 1, 0}, std::nullopt},
  };
  EXPECT_EQ(code_of([&] { AvatarRig::create(two_roots, {}); }), ErrorCode::InvalidRig);
  const std::vector<RigJointSpec> not_unit{
      {"root", std::nullopt, 0, {0, 1, 0}, std::nullopt},
      {"a", "root", 1.0, {0, 1.0001, 0}, std::nullopt},
  };
  EXPECT_EQ(code_of([&] { AvatarRig::create(not_unit, {}); }), ErrorCode::InvalidRig);
}

TEST(Rig, ZUpRigIsRemappedOnce) {
  const std::vector<RigJointSpec> specs{
      {"root", std::nullopt, 0, {0, 0, 1}, std::nullopt},
      {"a", "root", 1.0, {0, 0, 1}, make_ball({0, 0, 1}, 0.5)},
      {"b", "a", 1.0, {1, 0, 0}, std::nullopt},
  };
  const AvatarRig rig = AvatarRig::create(specs, {"b"}, UpAxis::Z);
  EXPECT_EQ(rig.joint(1).rest_direction, (Vec3{0, 1, 0}));
  EXPECT_EQ(std::get<BallConstraint>(*rig.joint(1).constraint).cone_axis, (Vec3{0, 1, 0}));
}

TEST(Rig, ZUpHingeKeepsItsSense) {
  // A hinge about z-up's x axis bending +y toward +z must bend the remapped
  // bone the same physical way.
  const Vec3 bone_z_up{0, 1, 0};
  const Quat bend_z_up = Quat::from_axis_angle({1, 0, 0}, 0.5);
  const Vec3 bent_z_up = bend_z_up.rotate(bone_z_up);
  const std::vector<RigJointSpec> specs{
      {"root", std::nullopt, 0, {0, 0, 1}, std::nullopt},
      {"a", "root", 1.0, bone_z_up, make_hinge({1, 0, 0}, -1.0, 1.0)},
      {"b", "a", 1.0, bone_z_up, std::nullopt},
  };
  const AvatarRig rig = AvatarRig::create(specs, {"b"}, UpAxis::Z);
  const auto& hinge = std::get<HingeConstraint>(*rig.joint(1).constraint);
  const Vec3 bent_y_up = Quat::from_axis_angle(hinge.hinge_axis, 0.5).rotate(rig.joint(2).rest_direction);
  const Vec3 expected = remap_axes(bent_z_up);
  EXPECT_NEAR(bent_y_up.x, expected.x, 1e-12);
  EXPECT_NEAR(bent_y_up.y, expected.y, 1e-12);
  EXPECT_NEAR(bent_y_up.z, expected.z, 1e-12);
}

TEST(Rig, BallOnLeafIsRejected) {
  const std::vector<RigJointSpec> specs{
      {"root", std::nullopt, 0, {0, 1, 0}, std::nullopt},
      {"a", "root", 1.0, {0, 1, 0}, make_ball({0, 1, 0}, 0.5)},
  };
  EXPECT_EQ(code_of([&] { AvatarRig::create(specs, {}); }), ErrorCode::InvalidRig);
}

TEST(Rig, MissingFileIsIoError) {
  EXPECT_EQ(code_of([] { load_rig("/nonexistent/rig.json"); }), ErrorCode::IoError);
}
