// SPDX-License-Identifier: Apache-2.0
//
// Concrete sources, stages and sinks for the default graph
// source -> lift -> retarget -> ik -> sink.
#pragma once

#include <chrono>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "posebridge/ik.hpp"
#include "posebridge/pipeline.hpp"
#include "posebridge/retarget.hpp"
#include "posebridge/skeleton.hpp"
#include "posebridge/socket.hpp"
#include "posebridge/stereo.hpp"
#include "posebridge/synthetic.hpp"
#include "posebridge/wire.hpp"

namespace posebridge {

/// Turns a decoded wire frame into a pipeline packet. Keypoint frames are
/// bound to `scheme`; joint-config frames keep their exact wire form.
inline Envelope envelope_from_wire(wire::WireFrame w, const SchemePtr& scheme) {
  Envelope env;
  env.sequence = w.sequence;
  env.source_timestamp_us = w.timestamp_us;
  if (w.type == wire::FrameType::JointConfig) {
    const int joints = static_cast<int>(w.entries.size());
    ConfigFrame cf{wire::configuration_from_wire(w, joints), std::move(w)};
    env.payload = std::move(cf);
  } else {
    env.payload = wire::keypoints_from_wire(w, scheme);
  }
  return env;
}

// ---------------------------------------------------------------------------
// Sources

/// Replays a recorded-stream file on its own timestamps.
class RecordedSource final : public FrameSource {
 public:
  RecordedSource(const std::string& path, SchemePtr scheme)
      : in_(path, std::ios::binary), reader_(wire::istream_source(in_)), scheme_(std::move(scheme)) {
    if (!in_) throw Error(ErrorCode::IoError, "cannot open recording '" + path + "'");
  }

  std::optional<Envelope> read() override {
    auto w = reader_.next();
    if (!w) return std::nullopt;
    return envelope_from_wire(std::move(*w), scheme_);
  }

 private:
  std::ifstream in_;
  wire::RecordReader reader_;
  SchemePtr scheme_;
};

/// Two 2D recordings read in lockstep; the shorter one ends the stream.
class StereoRecordedSource final : public FrameSource {
 public:
  StereoRecordedSource(const std::string& path_a, const std::string& path_b, SchemePtr scheme)
      : a_(path_a, scheme), b_(path_b, scheme) {}

  std::optional<Envelope> read() override {
    auto a = a_.read();
    auto b = b_.read();
    if (!a || !b) return std::nullopt;
    return pair_up(std::move(*a), std::move(*b));
  }

  static Envelope pair_up(Envelope a, Envelope b) {
    auto* fa = std::get_if<KeypointFrame>(&a.payload);
    auto* fb = std::get_if<KeypointFrame>(&b.payload);
    if (!fa || !fb || fa->space != SpaceTag::Camera2d || fb->space != SpaceTag::Camera2d)
      throw Error(ErrorCode::BadFrameType, "stereo input must be keypoints2d on both streams");
    Envelope out;
    out.sequence = a.sequence;
    out.source_timestamp_us = a.source_timestamp_us;
    out.payload = StereoFrames{std::move(*fa), std::move(*fb)};
    return out;
  }

 private:
  RecordedSource a_, b_;
};

/// Accepts one producer connection and forwards its frames as they arrive.
class SocketSource final : public FrameSource {
 public:
  SocketSource(const net::Endpoint& ep, SchemePtr scheme) : listener_(ep), scheme_(std::move(scheme)) {}

  std::uint16_t port() const { return listener_.port(); }

  std::optional<Envelope> read() override {
    if (!stream_) stream_ = std::make_unique<net::FrameStream>(listener_.accept());
    auto w = stream_->read();
    if (!w) return std::nullopt;
    return envelope_from_wire(std::move(*w), scheme_);
  }

  bool paced() const override { return false; }

 private:
  net::Listener listener_;
  std::unique_ptr<net::FrameStream> stream_;
  SchemePtr scheme_;
};

class StereoSocketSource final : public FrameSource {
 public:
  StereoSocketSource(const net::Endpoint& a, const net::Endpoint& b, SchemePtr scheme)
      : a_(a, scheme), b_(b, scheme) {}

  std::optional<Envelope> read() override {
    auto a = a_.read();
    auto b = b_.read();
    if (!a || !b) return std::nullopt;
    return StereoRecordedSource::pair_up(std::move(*a), std::move(*b));
  }

  bool paced() const override { return false; }

 private:
  SocketSource a_, b_;
};

/// The scripted performer sampled at a fixed rate.
class SyntheticSource final : public FrameSource {
 public:
  SyntheticSource(SchemePtr scheme, double fps, double duration_s, PerformerOptions opts = {})
      : scheme_(std::move(scheme)), fps_(fps), opts_(opts) {
    if (!(fps > 0.0)) throw Error(ErrorCode::ConfigError, "synthetic fps must be positive");
    if (!(duration_s >= 0.0)) throw Error(ErrorCode::ConfigError, "synthetic duration must be >= 0");
    frames_ = static_cast<std::uint32_t>(std::floor(duration_s * fps + 1e-9));
  }

  std::optional<Envelope> read() override {
    if (next_ >= frames_) return std::nullopt;
    const double t = static_cast<double>(next_) / fps_;
    Envelope env;
    env.payload = performer_frame(scheme_, t, next_, opts_);
    env.sequence = next_;
    env.source_timestamp_us = std::get<KeypointFrame>(env.payload).timestamp_us;
    ++next_;
    return env;
  }

 private:
  SchemePtr scheme_;
  double fps_;
  PerformerOptions opts_;
  std::uint32_t frames_ = 0;
  std::uint32_t next_ = 0;
};

/// Neutral joint configurations at a fixed rate, for timing the transport
/// with identity stages.
class ConfigTickSource final : public FrameSource {
 public:
  ConfigTickSource(JointConfiguration neutral, double fps, double duration_s)
      : neutral_(std::move(neutral)), fps_(fps) {
    if (!(fps > 0.0)) throw Error(ErrorCode::ConfigError, "synthetic fps must be positive");
    if (!(duration_s >= 0.0)) throw Error(ErrorCode::ConfigError, "synthetic duration must be >= 0");
    frames_ = static_cast<std::uint32_t>(std::floor(duration_s * fps + 1e-9));
  }

  std::optional<Envelope> read() override {
    if (next_ >= frames_) return std::nullopt;
    JointConfiguration c = neutral_;
    c.sequence = next_;
    c.timestamp_us = static_cast<std::uint64_t>(std::llround(static_cast<double>(next_) * 1e6 / fps_));
    Envelope env;
    env.sequence = c.sequence;
    env.source_timestamp_us = c.timestamp_us;
    env.payload = make_config_frame(std::move(c));
    ++next_;
    return env;
  }

 private:
  JointConfiguration neutral_;
  double fps_;
  std::uint32_t frames_ = 0;
  std::uint32_t next_ = 0;
};

/// Source backed by a fixed list of envelopes (tests, embedding).
class VectorSource final : public FrameSource {
 public:
  explicit VectorSource(std::vector<Envelope> items) : items_(std::move(items)) {}
  std::optional<Envelope> read() override {
    if (next_ >= items_.size()) return std::nullopt;
    return items_[next_++];
  }

 private:
  std::vector<Envelope> items_;
  std::size_t next_ = 0;
};

// ---------------------------------------------------------------------------
// Stages

class IdentityStage final : public Stage {
 public:
  std::optional<Envelope> process(Envelope in) override { return in; }
};

/// Produces validated 3D keypoints: lifts stereo pairs, checks 3D frames
/// against the scheme and brings z-up input into the internal y-up frame.
class LiftStage final : public Stage {
 public:
  LiftStage(SchemePtr scheme, std::optional<CameraPair> pair, LiftOptions opts = {}, bool input_z_up = false)
      : scheme_(std::move(scheme)), pair_(std::move(pair)), opts_(opts), z_up_(input_z_up) {}

  std::optional<Envelope> process(Envelope in) override {
    if (std::holds_alternative<ConfigFrame>(in.payload)) return in;
    KeypointFrame frame;
    if (auto* st = std::get_if<StereoFrames>(&in.payload)) {
      if (!pair_) throw Error(ErrorCode::ConfigError, "stereo input without calibration");
      validate_frame(st->a, *scheme_);
      validate_frame(st->b, *scheme_);
      frame = lift_frame(st->a, st->b, *pair_, opts_);
    } else if (auto* kp = std::get_if<KeypointFrame>(&in.payload)) {
      if (kp->space == SpaceTag::Camera2d) throw Error(ErrorCode::BadFrameType, "2D keypoints need a stereo pair");
      frame = validate_frame(*kp, *scheme_);
    } else {
      throw Error(ErrorCode::BadFrameType, "lift expects keypoints");
    }
    if (z_up_)
      for (auto& p : frame.points) p.position = remap_axes(p.position);
    frame.scheme = scheme_;
    in.payload = std::move(frame);
    return in;
  }

 private:
  SchemePtr scheme_;
  std::optional<CameraPair> pair_;
  LiftOptions opts_;
  bool z_up_;
};

/// Source-side retargeting: per-limb normalized joints.
class RetargetStage final : public Stage {
 public:
  RetargetStage(std::shared_ptr<const RetargetMap> map, double threshold = kDefaultConfidenceThreshold,
                double epsilon = kDefaultBasisEpsilon)
      : map_(std::move(map)), threshold_(threshold), epsilon_(epsilon) {}

  std::optional<Envelope> process(Envelope in) override {
    if (std::holds_alternative<ConfigFrame>(in.payload)) return in;
    const auto* frame = std::get_if<KeypointFrame>(&in.payload);
    if (!frame) throw Error(ErrorCode::BadFrameType, "retarget expects 3D keypoints");
    in.payload = normalize_pose(*frame, *map_, threshold_, epsilon_);
    return in;
  }

 private:
  std::shared_ptr<const RetargetMap> map_;
  double threshold_, epsilon_;
};

/// Engine-side retargeting and IK. Keeps the avatar's pose between frames;
/// each limb is denormalized against the current pose and solved in map
/// order, so a forearm sees the upper arm already moved.
class IkStage final : public Stage {
 public:
  IkStage(std::shared_ptr<const AvatarRig> rig, std::shared_ptr<const RetargetMap> map, IkOptions opts = {},
          double epsilon = kDefaultBasisEpsilon)
      : rig_(std::move(rig)), map_(std::move(map)), opts_(opts), epsilon_(epsilon),
        current_(neutral_configuration(*rig_)) {
    for (const LimbEntry& limb : map_->entries()) chains_.push_back(make_chain(*rig_, limb.chain_root, limb.end_effector));
  }

  std::optional<Envelope> process(Envelope in) override {
    if (std::holds_alternative<ConfigFrame>(in.payload)) return in;
    const auto* np = std::get_if<NormalizedPose>(&in.payload);
    if (!np) throw Error(ErrorCode::BadFrameType, "ik expects normalized joints");
    if (np->limbs.size() != map_->size()) throw Error(ErrorCode::InvalidRetargetMap, "limb count does not match map");

    JointConfiguration config = current_;
    for (std::size_t i = 0; i < map_->size(); ++i) {
      if (!np->limbs[i].joint) continue;
      const LimbEntry& limb = map_->entries()[i];
      const Pose pose = forward_kinematics(*rig_, config);
      const Vec3 offset = limb_offset(limb, *np->limbs[i].joint, pose.positions, epsilon_);
      const Vec3 target = pose.positions[static_cast<std::size_t>(limb.anchor)] + offset;
      config = solve_ik(*rig_, chains_[i], config, target, opts_).configuration;
    }
    config.timestamp_us = np->timestamp_us;
    config.sequence = np->sequence;
    config.stale_flag = false;
    current_ = config;
    in.payload = make_config_frame(std::move(config));
    return in;
  }

 private:
  std::shared_ptr<const AvatarRig> rig_;
  std::shared_ptr<const RetargetMap> map_;
  IkOptions opts_;
  double epsilon_;
  std::vector<KinematicChain> chains_;
  JointConfiguration current_;
};

// ---------------------------------------------------------------------------
// Sinks

/// Writes the recorded-stream format: length-prefixed frames.
class RecordSink final : public FrameSink {
 public:
  explicit RecordSink(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
  }
  void write(const SinkRecord& r) override { wire::write_record(out_, r.frame.wire); }
  void flush() override { out_.flush(); }

 private:
  std::ofstream out_;
};

class SocketSink final : public FrameSink {
 public:
  explicit SocketSink(const net::Endpoint& ep) : stream_(net::FrameStream::connect(ep)) {}
  void write(const SinkRecord& r) override { stream_->write(r.frame.wire); }
  void flush() override { stream_->shutdown(); }

 private:
  std::unique_ptr<net::FrameStream> stream_;
};

/// One configuration per line:
///   <sequence> <timestamp_us> <status> then rx ry rz per joint in rig order
/// (rotation vectors, radians, 6 decimals). A '#' header names the columns.
class TextSink final : public FrameSink {
 public:
  TextSink(std::ostream& out, std::vector<std::string> joint_names) : out_(out), names_(std::move(joint_names)) {}

  void write(const SinkRecord& r) override {
    if (!header_done_) {
      out_ << "# sequence timestamp_us status";
      for (const auto& n : names_) out_ << ' ' << n << ".rx " << n << ".ry " << n << ".rz";
      out_ << '\n';
      header_done_ = true;
    }
    out_ << r.frame.config.sequence << ' ' << r.frame.config.timestamp_us << ' ' << to_string(r.status);
    out_ << std::fixed << std::setprecision(6);
    for (const Quat& q : r.frame.config.rotations) {
      const Vec3 rv = q.rotation_vector();
      out_ << ' ' << rv.x << ' ' << rv.y << ' ' << rv.z;
    }
    out_ << std::defaultfloat << '\n';
  }
  void flush() override { out_.flush(); }

 private:
  std::ostream& out_;
  std::vector<std::string> names_;
  bool header_done_ = false;
};

/// Keeps every record; the vector is shared so it outlives the pipeline.
class CollectingSink final : public FrameSink {
 public:
  explicit CollectingSink(std::shared_ptr<std::vector<SinkRecord>> out) : out_(std::move(out)) {}
  void write(const SinkRecord& r) override { out_->push_back(r); }

 private:
  std::shared_ptr<std::vector<SinkRecord>> out_;
};

class NullSink final : public FrameSink {
 public:
  void write(const SinkRecord&) override {}
};

// ---------------------------------------------------------------------------
// Replay

struct ReplayStats {
  std::uint64_t frames = 0;
  double wall_seconds = 0.0;
};

/// Sends every record at its recorded cadence divided by `speed`. Frames
/// before a corrupt tail are all delivered before the error propagates.
inline ReplayStats replay_records(wire::RecordReader& reader, const std::function<void(const wire::WireFrame&)>& send,
                                  double speed) {
  if (!(speed > 0.0)) throw Error(ErrorCode::ConfigError, "replay speed must be positive");
  const auto start = std::chrono::steady_clock::now();
  std::optional<std::uint64_t> origin;
  ReplayStats stats;
  while (auto w = reader.next()) {
    if (!origin) origin = w->timestamp_us;
    const double rel = w->timestamp_us >= *origin ? static_cast<double>(w->timestamp_us - *origin) : 0.0;
    std::this_thread::sleep_until(start + std::chrono::microseconds(static_cast<std::int64_t>(rel / speed)));
    send(*w);
    ++stats.frames;
  }
  stats.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return stats;
}

}  // namespace posebridge
