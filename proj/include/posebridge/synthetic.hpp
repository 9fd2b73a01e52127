// SPDX-License-Identifier: Apache-2.0
//
// Scripted performer: a smoothly moving human figure rendered into any
// landmark scheme by landmark name. Used by the bench source and by tests.
#pragma once

#include <cmath>
#include <string>
#include <unordered_map>

#include "posebridge/math.hpp"
#include "posebridge/skeleton.hpp"

namespace posebridge {

struct PerformerOptions {
  double heading_amplitude = 0.3;  // radians of slow body yaw
  Vec3 origin{0.0, 0.0, 0.0};
  double confidence = 0.95;
};

/// Named world positions (y up, meters) of the performer at time t seconds.
inline std::unordered_map<std::string, Vec3> performer_landmarks(double t, const PerformerOptions& opts = {}) {
  std::unordered_map<std::string, Vec3> p;
  const Vec3 fwd{0, 0, 1};

  auto arm = [&](const std::string& side, double sign, double phase) {
    const Vec3 shoulder{sign * 0.19, 1.45, 0.0};
    const double abduct = 0.6 + 0.5 * std::sin(2.0 * t + phase);
    const double flex = 0.8 + 0.6 * std::sin(1.3 * t + 1.0 + phase);
    const Vec3 upper{sign * std::sin(abduct), -std::cos(abduct), 0.0};
    const Vec3 fore = upper * std::cos(flex) + fwd * std::sin(flex);
    const Vec3 elbow = shoulder + upper * 0.28;
    const Vec3 wrist = elbow + fore * 0.25;
    p[side + "_shoulder"] = shoulder;
    p[side + "_elbow"] = elbow;
    p[side + "_wrist"] = wrist;
    p[side + "_pinky"] = wrist + fore * 0.08 + Vec3{sign * -0.02, 0, 0};
    p[side + "_index"] = wrist + fore * 0.09 + Vec3{sign * 0.01, 0, 0.01};
    p[side + "_thumb"] = wrist + fore * 0.05 + Vec3{sign * 0.02, 0, 0.02};
  };
  auto leg = [&](const std::string& side, double sign, double phase) {
    const Vec3 hip{sign * 0.11, 0.95, 0.0};
    const double h = 0.3 * std::sin(1.5 * t + phase);
    const double k = 0.4 + 0.3 * std::sin(1.5 * t + 0.7 + phase);
    const Vec3 thigh{0.0, -std::cos(h), std::sin(h)};
    const Vec3 shin{0.0, -std::cos(h - k), std::sin(h - k)};
    const Vec3 knee = hip + thigh * 0.42;
    const Vec3 ankle = knee + shin * 0.40;
    p[side + "_hip"] = hip;
    p[side + "_knee"] = knee;
    p[side + "_ankle"] = ankle;
    p[side + "_heel"] = ankle + Vec3{0, -0.05, -0.05};
    p[side + "_foot_index"] = ankle + Vec3{0, -0.06, 0.15};
  };
  arm("left", 1.0, 0.0);
  arm("right", -1.0, 2.1);
  leg("left", 1.0, 0.0);
  leg("right", -1.0, std::numbers::pi);

  p["nose"] = {0.0, 1.62, 0.09};
  for (const auto& [side, sign] : {std::pair{std::string("left"), 1.0}, std::pair{std::string("right"), -1.0}}) {
    p[side + "_eye"] = {sign * 0.032, 1.655, 0.075};
    p[side + "_eye_inner"] = {sign * 0.018, 1.655, 0.08};
    p[side + "_eye_outer"] = {sign * 0.046, 1.655, 0.07};
    p[side + "_ear"] = {sign * 0.075, 1.63, 0.0};
  }
  p["mouth_left"] = {0.025, 1.585, 0.075};
  p["mouth_right"] = {-0.025, 1.585, 0.075};

  const Quat heading = Quat::from_axis_angle({0, 1, 0}, opts.heading_amplitude * std::sin(0.5 * t));
  for (auto& [name, pos] : p) pos = heading.rotate(pos) + opts.origin;
  return p;
}

/// Renders the performer into `scheme`. Landmarks the performer does not
/// know are placed at the nose with confidence 0.
inline KeypointFrame performer_frame(const SchemePtr& scheme, double t, std::uint32_t sequence,
                                     const PerformerOptions& opts = {}) {
  const auto named = performer_landmarks(t, opts);
  KeypointFrame f;
  f.timestamp_us = static_cast<std::uint64_t>(std::llround(t * 1e6));
  f.sequence = sequence;
  f.scheme = scheme;
  f.space = SpaceTag::World3d;
  f.points.resize(static_cast<std::size_t>(scheme->count()));
  for (int i = 0; i < scheme->count(); ++i) {
    auto it = named.find(scheme->landmark_name(i));
    f.points[static_cast<std::size_t>(i)] =
        it == named.end() ? Keypoint{named.at("nose"), 0.0} : Keypoint{it->second, opts.confidence};
  }
  return f;
}

}  // namespace posebridge
