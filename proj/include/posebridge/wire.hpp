// SPDX-License-Identifier: Apache-2.0
//
// Binary frame codec, protocol version 1. All integers and floats are
// little-endian.
//
//   offset  size  field
//   0       4     magic 0x504F5345 ("ESOP" on the wire)
//   4       1     version (1)
//   5       1     frame type (0 keypoints2d, 1 keypoints3d, 2 joint_config)
//   6       2     entry count
//   8       8     timestamp_us
//   16      4     sequence
//   20      17*n  entries: id u8, x f32, y f32, z f32, confidence f32
//
// Streams (sockets and recorded files) carry each frame behind a u32 length
// prefix.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "posebridge/error.hpp"
#include "posebridge/ik.hpp"
#include "posebridge/skeleton.hpp"

namespace posebridge::wire {

inline constexpr std::uint32_t kMagic = 0x504F5345;
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 20;
inline constexpr std::size_t kEntrySize = 17;
inline constexpr std::size_t kMaxFrameSize = kHeaderSize + kEntrySize * 0xFFFF;

enum class FrameType : std::uint8_t { Keypoints2d = 0, Keypoints3d = 1, JointConfig = 2 };

struct WireEntry {
  std::uint8_t id = 0;
  float x = 0.f, y = 0.f, z = 0.f;
  float confidence = 0.f;

  friend bool operator==(const WireEntry&, const WireEntry&) = default;
};

struct WireFrame {
  FrameType type = FrameType::Keypoints3d;
  std::uint64_t timestamp_us = 0;
  std::uint32_t sequence = 0;
  std::vector<WireEntry> entries;

  friend bool operator==(const WireFrame&, const WireFrame&) = default;
};

using Bytes = std::vector<std::uint8_t>;

namespace detail {

template <class T>
void put_le(Bytes& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <class T>
T get_le(std::span<const std::uint8_t> in, std::size_t offset) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(static_cast<T>(in[offset + i]) << (8 * i));
  return value;
}

inline void put_f32(Bytes& out, float f) { put_le(out, std::bit_cast<std::uint32_t>(f)); }
inline float get_f32(std::span<const std::uint8_t> in, std::size_t offset) {
  return std::bit_cast<float>(get_le<std::uint32_t>(in, offset));
}

}  // namespace detail

inline Bytes encode_frame(const WireFrame& frame) {
  if (frame.entries.size() > 0xFFFF) throw Error(ErrorCode::CountMismatch, "more than 65535 entries");
  if (static_cast<std::uint8_t>(frame.type) > 2) throw Error(ErrorCode::BadFrameType, "unknown frame type");
  Bytes out;
  out.reserve(kHeaderSize + kEntrySize * frame.entries.size());
  detail::put_le(out, kMagic);
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(frame.type));
  detail::put_le(out, static_cast<std::uint16_t>(frame.entries.size()));
  detail::put_le(out, frame.timestamp_us);
  detail::put_le(out, frame.sequence);
  for (const WireEntry& e : frame.entries) {
    out.push_back(e.id);
    detail::put_f32(out, e.x);
    detail::put_f32(out, e.y);
    detail::put_f32(out, e.z);
    detail::put_f32(out, e.confidence);
  }
  return out;
}

/// Decodes exactly one frame occupying the whole buffer. Magic and version
/// are checked before anything else is read.
inline WireFrame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw Error(ErrorCode::TruncatedFrame, "buffer shorter than magic");
  if (detail::get_le<std::uint32_t>(bytes, 0) != kMagic) throw Error(ErrorCode::BadMagic, "bad magic");
  if (bytes.size() < 5) throw Error(ErrorCode::TruncatedFrame, "buffer ends before version");
  if (bytes[4] != kVersion) throw Error(ErrorCode::UnsupportedVersion, "version " + std::to_string(bytes[4]));
  if (bytes.size() < kHeaderSize) throw Error(ErrorCode::TruncatedFrame, "buffer shorter than header");
  if (bytes[5] > 2) throw Error(ErrorCode::BadFrameType, "frame type " + std::to_string(bytes[5]));

  WireFrame frame;
  frame.type = static_cast<FrameType>(bytes[5]);
  const std::size_t count = detail::get_le<std::uint16_t>(bytes, 6);
  frame.timestamp_us = detail::get_le<std::uint64_t>(bytes, 8);
  frame.sequence = detail::get_le<std::uint32_t>(bytes, 16);
  const std::size_t expected = kHeaderSize + kEntrySize * count;
  if (bytes.size() < expected)
    throw Error(ErrorCode::TruncatedFrame, "declared " + std::to_string(count) + " entries, buffer holds " +
                                               std::to_string((bytes.size() - kHeaderSize) / kEntrySize));
  if (bytes.size() > expected) throw Error(ErrorCode::CountMismatch, "trailing bytes after declared entries");
  frame.entries.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t o = kHeaderSize + kEntrySize * i;
    frame.entries[i] = {bytes[o], detail::get_f32(bytes, o + 1), detail::get_f32(bytes, o + 5),
                        detail::get_f32(bytes, o + 9), detail::get_f32(bytes, o + 13)};
  }
  return frame;
}

// ---------------------------------------------------------------------------
// Length-prefixed records

inline Bytes encode_record(const WireFrame& frame) {
  Bytes body = encode_frame(frame);
  Bytes out;
  out.reserve(4 + body.size());
  detail::put_le(out, static_cast<std::uint32_t>(body.size()));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

/// Pulls length-prefixed frames from any byte source. `read_some` fills up to
/// n bytes and returns how many it wrote, 0 at end of input.
class RecordReader {
 public:
  using ReadSome = std::function<std::size_t(std::uint8_t*, std::size_t)>;

  explicit RecordReader(ReadSome read_some) : read_some_(std::move(read_some)) {}

  /// Next frame, or nullopt on a clean end of input (at a record boundary).
  std::optional<WireFrame> next() {
    std::uint8_t prefix[4];
    const std::size_t got = read_exact(prefix, 4);
    if (got == 0) return std::nullopt;
    if (got < 4) throw Error(ErrorCode::TruncatedFrame, "input ends inside a length prefix");
    const std::uint32_t length = detail::get_le<std::uint32_t>(std::span<const std::uint8_t>(prefix, 4), 0);
    if (length > kMaxFrameSize) throw Error(ErrorCode::FrameTooLarge, "record length " + std::to_string(length));
    buffer_.resize(length);
    if (read_exact(buffer_.data(), length) < length)
      throw Error(ErrorCode::TruncatedFrame, "input ends inside a " + std::to_string(length) + "-byte record");
    ++records_;
    return decode_frame(buffer_);
  }

  std::size_t records() const noexcept { return records_; }

 private:
  std::size_t read_exact(std::uint8_t* dst, std::size_t n) {
    std::size_t total = 0;
    while (total < n) {
      const std::size_t got = read_some_(dst + total, n - total);
      if (got == 0) break;
      total += got;
    }
    return total;
  }

  ReadSome read_some_;
  Bytes buffer_;
  std::size_t records_ = 0;
};

inline RecordReader::ReadSome istream_source(std::istream& in) {
  return [&in](std::uint8_t* dst, std::size_t n) -> std::size_t {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in.gcount());
  };
}

inline void write_record(std::ostream& out, const WireFrame& frame) {
  const Bytes rec = encode_record(frame);
  out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
  if (!out) throw Error(ErrorCode::IoError, "failed to write record");
}

// ---------------------------------------------------------------------------
// Domain conversions

inline WireFrame to_wire(const KeypointFrame& frame) {
  WireFrame w;
  w.type = frame.space == SpaceTag::Camera2d ? FrameType::Keypoints2d : FrameType::Keypoints3d;
  w.timestamp_us = frame.timestamp_us;
  w.sequence = frame.sequence;
  if (frame.points.size() > 256) throw Error(ErrorCode::CountMismatch, "more than 256 landmarks");
  w.entries.reserve(frame.points.size());
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    const Keypoint& kp = frame.points[i];
    w.entries.push_back({static_cast<std::uint8_t>(i), static_cast<float>(kp.position.x),
                         static_cast<float>(kp.position.y), static_cast<float>(kp.position.z),
                         static_cast<float>(kp.confidence)});
  }
  return w;
}

/// Entries are placed by id; the frame must carry every landmark of `scheme`.
inline KeypointFrame keypoints_from_wire(const WireFrame& w, SchemePtr scheme) {
  if (w.type == FrameType::JointConfig) throw Error(ErrorCode::BadFrameType, "expected a keypoint frame");
  if (static_cast<int>(w.entries.size()) != scheme->count())
    throw Error(ErrorCode::SchemeMismatch, "frame carries " + std::to_string(w.entries.size()) + " landmarks, scheme '" +
                                               scheme->name() + "' has " + std::to_string(scheme->count()));
  KeypointFrame f;
  f.timestamp_us = w.timestamp_us;
  f.sequence = w.sequence;
  f.space = w.type == FrameType::Keypoints2d ? SpaceTag::Camera2d : SpaceTag::World3d;
  f.points.resize(w.entries.size());
  std::vector<bool> seen(w.entries.size(), false);
  for (const WireEntry& e : w.entries) {
    if (e.id >= w.entries.size() || seen[e.id])
      throw Error(ErrorCode::SchemeMismatch, "landmark id " + std::to_string(e.id) + " repeated or out of range");
    seen[e.id] = true;
    f.points[e.id] = {{e.x, e.y, e.z}, e.confidence};
  }
  f.scheme = std::move(scheme);
  return f;
}

/// Joint rotations travel as rotation vectors (axis * angle, radians);
/// confidence is 1 for fresh output and 0 when the stale flag is set.
inline WireFrame to_wire(const JointConfiguration& config) {
  if (config.rotations.size() > 256) throw Error(ErrorCode::CountMismatch, "more than 256 joints");
  WireFrame w;
  w.type = FrameType::JointConfig;
  w.timestamp_us = config.timestamp_us;
  w.sequence = config.sequence;
  w.entries.reserve(config.rotations.size());
  for (std::size_t i = 0; i < config.rotations.size(); ++i) {
    const Vec3 rv = config.rotations[i].rotation_vector();
    w.entries.push_back({static_cast<std::uint8_t>(i), static_cast<float>(rv.x), static_cast<float>(rv.y),
                         static_cast<float>(rv.z), config.stale_flag ? 0.f : 1.f});
  }
  return w;
}

inline JointConfiguration configuration_from_wire(const WireFrame& w, int joint_count) {
  if (w.type != FrameType::JointConfig) throw Error(ErrorCode::BadFrameType, "expected a joint_config frame");
  if (static_cast<int>(w.entries.size()) != joint_count)
    throw Error(ErrorCode::MissingJoint, "frame carries " + std::to_string(w.entries.size()) + " joints, rig has " +
                                             std::to_string(joint_count));
  JointConfiguration c;
  c.timestamp_us = w.timestamp_us;
  c.sequence = w.sequence;
  c.rotations.assign(w.entries.size(), Quat::identity());
  bool stale = false;
  std::vector<bool> seen(w.entries.size(), false);
  for (const WireEntry& e : w.entries) {
    if (e.id >= w.entries.size() || seen[e.id])
      throw Error(ErrorCode::MissingJoint, "joint id " + std::to_string(e.id) + " repeated or out of range");
    seen[e.id] = true;
    c.rotations[e.id] = Quat::from_rotation_vector({e.x, e.y, e.z});
    stale = stale || e.confidence < 0.5f;
  }
  c.stale_flag = stale;
  return c;
}

}  // namespace posebridge::wire
