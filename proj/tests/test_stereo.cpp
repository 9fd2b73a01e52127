// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "posebridge/documents.hpp"
#include "posebridge/stereo.hpp"
#include "posebridge/synthetic.hpp"

using namespace posebridge;

namespace {

CameraModel unit_camera(const Vec3& center) {
  CameraModel c;
  c.fx = c.fy = 1.0;
  c.translation = -center;
  return c;
}

CameraPair unit_pair() { return CameraPair(unit_camera({0, 0, 0}), unit_camera({1, 0, 0})); }

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

KeypointFrame project_frame(const KeypointFrame& world, const CameraModel& cam, std::uint64_t ts) {
  KeypointFrame f = world;
  f.space = SpaceTag::Camera2d;
  f.timestamp_us = ts;
  for (auto& p : f.points) {
    const auto px = cam.project(p.position);
    p.position = {px[0], px[1], 0.0};
  }
  return f;
}

}  // namespace

TEST(Calibration, UnitBaseline) {
  const auto doc = nlohmann::json::parse(R"({
    "camera_a": {"fx": 1, "fy": 1, "cx": 0, "cy": 0, "rotation": [[1,0,0],[0,1,0],[0,0,1]], "translation": [0,0,0]},
    "camera_b": {"fx": 1, "fy": 1, "cx": 0, "cy": 0, "rotation": [[1,0,0],[0,1,0],[0,0,1]], "translation": [-1,0,0]}
  })");
  EXPECT_NEAR(load_calibration(doc).baseline(), 1.0, 1e-15);
}

TEST(Calibration, IdenticalPosesAreDegenerate) {
  EXPECT_EQ(code_of([] { CameraPair(unit_camera({0, 0, 0}), unit_camera({0, 0, 0})); }), ErrorCode::DegenerateGeometry);
}

TEST(Calibration, StretchedRotationIsRejected) {
  CameraModel bad = unit_camera({1, 0, 0});
  bad.rotation.m[0][0] = 1.2;
  EXPECT_EQ(code_of([&] { CameraPair(unit_camera({0, 0, 0}), bad); }), ErrorCode::NonOrthonormalRotation);
}

TEST(Calibration, MalformedDocumentIsParseError) {
  EXPECT_EQ(code_of([] { load_calibration(std::string_view(R"({"camera_a": {"fx": 1}})")); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { load_calibration(std::string_view("not json")); }), ErrorCode::ParseError);
}

TEST(Calibration, ShippedDeskPairLoads) {
  const CameraPair pair = load_calibration_file(POSEBRIDGE_DATA_DIR "/calibration/desk_pair.json");
  EXPECT_NEAR(pair.baseline(), 0.6, 1e-12);
}

TEST(Triangulate, KnownPointAtDepthFive) {
  const Triangulation t = triangulate({0, 0}, {-0.2, 0}, unit_pair());
  EXPECT_NEAR(t.point.x, 0.0, 1e-9);
  EXPECT_NEAR(t.point.y, 0.0, 1e-9);
  EXPECT_NEAR(t.point.z, 5.0, 1e-9);
  EXPECT_NEAR(t.reprojection_error, 0.0, 1e-12);
}

TEST(Triangulate, ParallelRaysAreDegenerate) {
  EXPECT_EQ(code_of([] { triangulate({0, 0}, {0, 0}, unit_pair()); }), ErrorCode::DegenerateRays);
}

TEST(Triangulate, SymmetricUnderSwap) {
  const CameraPair pair = load_calibration_file(POSEBRIDGE_DATA_DIR "/calibration/desk_pair.json");
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int i = 0; i < 200; ++i) {
    const Vec3 x{u(rng), 1.0 + u(rng), u(rng)};
    auto pa = pair.a().project(x);
    auto pb = pair.b().project(x);
    const PixelPoint a{pa[0] + u(rng), pa[1] + u(rng)}, b{pb[0] + u(rng), pb[1] + u(rng)};
    const Vec3 p1 = triangulate(a, b, pair).point;
    const Vec3 p2 = triangulate(b, a, pair.swapped()).point;
    EXPECT_NEAR(p1.x, p2.x, 1e-9);
    EXPECT_NEAR(p1.y, p2.y, 1e-9);
    EXPECT_NEAR(p1.z, p2.z, 1e-9);
  }
}

TEST(Triangulate, ResidualIsLocallyMinimalOnProbeGrid) {
  const CameraPair pair = load_calibration_file(POSEBRIDGE_DATA_DIR "/calibration/desk_pair.json");
  const Vec3 x{0.1, 1.2, -0.2};
  auto pa = pair.a().project(x);
  auto pb = pair.b().project(x);
  const PixelPoint a{pa[0] + 0.7, pa[1] - 0.4}, b{pb[0] - 0.5, pb[1] + 0.6};
  const Triangulation t = triangulate(a, b, pair);
  for (int i = -2; i <= 2; ++i)
    for (int j = -2; j <= 2; ++j)
      for (int k = -2; k <= 2; ++k) {
        const Vec3 probe = t.point + Vec3{i * 5e-3, j * 5e-3, k * 5e-3};
        EXPECT_LE(t.reprojection_error, reprojection_error(probe, a, b, pair) + 1e-9);
      }
}

TEST(LiftFrame, ExactSceneIsRecovered) {
  const CameraPair pair = load_calibration_file(POSEBRIDGE_DATA_DIR "/calibration/desk_pair.json");
  const auto scheme = load_scheme(POSEBRIDGE_DATA_DIR "/schemes/mediapipe33.json");
  const KeypointFrame world = performer_frame(scheme, 2.0, 4);
  const KeypointFrame out = lift_frame(project_frame(world, pair.a(), 1000), project_frame(world, pair.b(), 1010), pair);
  EXPECT_EQ(out.timestamp_us, 1005u);
  EXPECT_EQ(out.space, SpaceTag::World3d);
  for (std::size_t i = 0; i < out.points.size(); ++i) {
    EXPECT_LT(distance(out.points[i].position, world.points[i].position), 1e-6);
    EXPECT_EQ(out.points[i].confidence, world.points[i].confidence);
  }
}

TEST(LiftFrame, OccludedInOneViewGetsZeroConfidence) {
  const CameraPair pair = load_calibration_file(POSEBRIDGE_DATA_DIR "/calibration/desk_pair.json");
  const auto scheme = load_scheme(POSEBRIDGE_DATA_DIR "/schemes/mediapipe33.json");
  const KeypointFrame world = performer_frame(scheme, 0.5, 0);
  KeypointFrame b = project_frame(world, pair.b(), 0);
  b.points[15].confidence = 0.0;
  const KeypointFrame out = lift_frame(project_frame(world, pair.a(), 0), b, pair);
  EXPECT_EQ(out.points[15].confidence, 0.0);
  EXPECT_LT(distance(out.points[16].position, world.points[16].position), 1e-6);
}

TEST(LiftFrame, FramesTooFarApartExceedSyncWindow) {
  const CameraPair pair = load_calibration_file(POSEBRIDGE_DATA_DIR "/calibration/desk_pair.json");
  const auto scheme = load_scheme(POSEBRIDGE_DATA_DIR "/schemes/mediapipe33.json");
  const KeypointFrame world = performer_frame(scheme, 0.5, 0);
  EXPECT_EQ(code_of([&] {
              lift_frame(project_frame(world, pair.a(), 0), project_frame(world, pair.b(), 50'000), pair);
            }),
            ErrorCode::SyncWindowExceeded);
}

TEST(LiftFrame, DifferentSchemesMismatch) {
  const CameraPair pair = unit_pair();
  KeypointFrame a, b;
  a.points.resize(33);
  b.points.resize(17);
  EXPECT_EQ(code_of([&] { lift_frame(a, b, pair); }), ErrorCode::SchemeMismatch);
}
