// SPDX-License-Identifier: Apache-2.0
//
// Engine configuration and the default five-stage graph.
//
// Input specs:  file:PATH | dual-file:PATH_A,PATH_B | socket:HOST:PORT |
//               dual-socket:HOST:PORT,HOST:PORT | synthetic:SECONDS
// Output specs: file:PATH | socket:HOST:PORT | stdout | none
#pragma once

#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "posebridge/documents.hpp"
#include "posebridge/engine.hpp"
#include "posebridge/pipeline.hpp"

namespace posebridge {

struct InputSpec {
  enum class Kind { File, DualFile, Socket, DualSocket, Synthetic };
  Kind kind = Kind::File;
  std::vector<std::string> locations;
  double synthetic_seconds = 0.0;

  bool live() const { return kind == Kind::Socket || kind == Kind::DualSocket; }
  bool dual() const { return kind == Kind::DualFile || kind == Kind::DualSocket; }
};

struct OutputSpec {
  enum class Kind { File, Socket, Stdout, None };
  Kind kind = Kind::Stdout;
  std::string location;
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) return out;
    start = pos + 1;
  }
}

}  // namespace detail

inline InputSpec parse_input_spec(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw Error(ErrorCode::ConfigError, "input '" + text + "' lacks a kind prefix");
  const std::string kind = text.substr(0, colon);
  const std::string rest = text.substr(colon + 1);
  InputSpec in;
  auto two = [&] {
    auto parts = detail::split(rest, ',');
    if (parts.size() != 2) throw Error(ErrorCode::ConfigError, "input '" + text + "' needs two comma-separated parts");
    return parts;
  };
  if (kind == "file") {
    in.kind = InputSpec::Kind::File;
    in.locations = {rest};
  } else if (kind == "dual-file") {
    in.kind = InputSpec::Kind::DualFile;
    in.locations = two();
  } else if (kind == "socket") {
    in.kind = InputSpec::Kind::Socket;
    in.locations = {rest};
  } else if (kind == "dual-socket") {
    in.kind = InputSpec::Kind::DualSocket;
    in.locations = two();
  } else if (kind == "synthetic") {
    in.kind = InputSpec::Kind::Synthetic;
    try {
      in.synthetic_seconds = std::stod(rest);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ConfigError, "synthetic input needs a duration in seconds");
    }
  } else {
    throw Error(ErrorCode::ConfigError, "unknown input kind '" + kind + "'");
  }
  for (const auto& l : in.locations)
    if (l.empty()) throw Error(ErrorCode::ConfigError, "input '" + text + "' has an empty location");
  if (in.live())
    for (const auto& l : in.locations) net::parse_endpoint(l);
  return in;
}

inline OutputSpec parse_output_spec(const std::string& text) {
  if (text == "stdout") return {OutputSpec::Kind::Stdout, {}};
  if (text == "none") return {OutputSpec::Kind::None, {}};
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const std::string kind = text.substr(0, colon);
    const std::string rest = text.substr(colon + 1);
    if (kind == "file" && !rest.empty()) return {OutputSpec::Kind::File, rest};
    if (kind == "socket") {
      net::parse_endpoint(rest);
      return {OutputSpec::Kind::Socket, rest};
    }
  }
  throw Error(ErrorCode::ConfigError, "output '" + text + "' is not file:PATH, socket:HOST:PORT, stdout or none");
}

struct EngineConfig {
  std::string scheme_path;
  std::string rig_path;
  std::string map_path;
  std::optional<std::string> calibration_path;
  InputSpec input;
  OutputSpec output;

  double fresh_ms = 100.0;
  double hold_ms = 1000.0;
  double sink_fps = 30.0;
  int ik_max_iterations = 200;
  std::optional<double> ik_tolerance;
  double confidence_threshold = kDefaultConfidenceThreshold;
  double sync_window_ms = 20.0;
  bool input_z_up = false;
  std::optional<RunMode> mode;  // default: step for recordings, threaded for live input
  double speed = 1.0;
  double synthetic_fps = 30.0;
  bool identity_stages = false;  // keep the graph shape but skip the math

  /// Default data files shipped with the engine.
  static EngineConfig defaults(const std::string& data_dir) {
    EngineConfig c;
    c.scheme_path = data_dir + "/schemes/mediapipe33.json";
    c.rig_path = data_dir + "/rigs/default_rig.json";
    c.map_path = data_dir + "/maps/default_map.json";
    return c;
  }

  RunMode effective_mode() const { return mode.value_or(input.live() ? RunMode::Threaded : RunMode::Step); }

  /// Overlays keys present in a config document; absent keys keep their
  /// value. Wrongly typed values are ConfigError.
  void merge_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
    try {
      detail::wrap_json("config", [&] {
        merge_keys(j);
        return 0;
      });
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ParseError) throw;
      throw Error(ErrorCode::ConfigError, e.what());
    }
  }

  void validate() const {
    auto need_file = [](const std::string& what, const std::string& path) {
      if (!std::filesystem::is_regular_file(path))
        throw Error(ErrorCode::ConfigError, what + " file not found: " + path);
    };
    need_file("scheme", scheme_path);
    need_file("rig", rig_path);
    need_file("retarget map", map_path);
    if (calibration_path) need_file("calibration", *calibration_path);
    if (input.dual() && !calibration_path) throw Error(ErrorCode::ConfigError, "dual input requires a calibration file");
    if (input.kind == InputSpec::Kind::File || input.kind == InputSpec::Kind::DualFile)
      for (const auto& p : input.locations) need_file("input", p);
    if (input.kind == InputSpec::Kind::Synthetic && !(input.synthetic_seconds >= 0.0))
      throw Error(ErrorCode::ConfigError, "synthetic duration must be >= 0");
    if (!(fresh_ms > 0.0 && fresh_ms <= hold_ms)) throw Error(ErrorCode::ConfigError, "need 0 < fresh_ms <= hold_ms");
    if (!(sink_fps > 0.0)) throw Error(ErrorCode::ConfigError, "sink_fps must be positive");
    if (ik_max_iterations < 1) throw Error(ErrorCode::ConfigError, "ik.max_iterations must be >= 1");
    if (ik_tolerance && !(*ik_tolerance > 0.0)) throw Error(ErrorCode::ConfigError, "ik.tolerance must be positive");
    if (!(confidence_threshold >= 0.0 && confidence_threshold <= 1.0))
      throw Error(ErrorCode::ConfigError, "confidence_threshold must be in [0, 1]");
    if (!(sync_window_ms >= 0.0)) throw Error(ErrorCode::ConfigError, "sync_window_ms must be >= 0");
    if (!(speed > 0.0)) throw Error(ErrorCode::ConfigError, "speed must be positive");
    if (!(synthetic_fps > 0.0)) throw Error(ErrorCode::ConfigError, "synthetic fps must be positive");
    if (effective_mode() == RunMode::Step && input.live())
      throw Error(ErrorCode::ConfigError, "step mode needs recorded or synthetic input");
  }

 private:
  void merge_keys(const nlohmann::json& j) {
    if (j.contains("scheme")) scheme_path = j.at("scheme").get<std::string>();
    if (j.contains("rig")) rig_path = j.at("rig").get<std::string>();
    if (j.contains("map")) map_path = j.at("map").get<std::string>();
    if (j.contains("calibration")) calibration_path = j.at("calibration").get<std::string>();
    if (j.contains("input")) input = parse_input_spec(j.at("input").get<std::string>());
    if (j.contains("output")) output = parse_output_spec(j.at("output").get<std::string>());
    if (j.contains("stale")) {
      const auto& s = j.at("stale");
      if (s.contains("fresh_ms")) fresh_ms = s.at("fresh_ms").get<double>();
      if (s.contains("hold_ms")) hold_ms = s.at("hold_ms").get<double>();
    }
    if (j.contains("ik")) {
      const auto& s = j.at("ik");
      if (s.contains("max_iterations")) ik_max_iterations = s.at("max_iterations").get<int>();
      if (s.contains("tolerance")) ik_tolerance = s.at("tolerance").get<double>();
    }
    if (j.contains("sink_fps")) sink_fps = j.at("sink_fps").get<double>();
    if (j.contains("confidence_threshold")) confidence_threshold = j.at("confidence_threshold").get<double>();
    if (j.contains("sync_window_ms")) sync_window_ms = j.at("sync_window_ms").get<double>();
    if (j.contains("input_up_axis")) {
      const auto up = j.at("input_up_axis").get<std::string>();
      if (up != "y" && up != "z") throw Error(ErrorCode::ConfigError, "input_up_axis must be \"y\" or \"z\"");
      input_z_up = up == "z";
    }
    if (j.contains("mode")) {
      const auto m = j.at("mode").get<std::string>();
      if (m != "step" && m != "threaded") throw Error(ErrorCode::ConfigError, "mode must be step or threaded");
      mode = m == "step" ? RunMode::Step : RunMode::Threaded;
    }
    if (j.contains("speed")) speed = j.at("speed").get<double>();
  }
};

/// Everything loaded from the files an EngineConfig names.
struct EngineAssets {
  SchemePtr scheme;
  std::shared_ptr<const AvatarRig> rig;
  std::shared_ptr<const RetargetMap> map;
  std::optional<CameraPair> calibration;
};

/// Loads and cross-checks the data files. File-level problems surface as
/// ConfigError naming the offending path.
inline EngineAssets load_assets(const EngineConfig& cfg) {
  auto guarded = [](const std::string& path, auto&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      throw Error(ErrorCode::ConfigError, path + ": " + e.what());
    }
  };
  EngineAssets a;
  a.scheme = guarded(cfg.scheme_path, [&] { return load_scheme(cfg.scheme_path); });
  a.rig = guarded(cfg.rig_path, [&] { return std::make_shared<const AvatarRig>(load_rig(cfg.rig_path)); });
  a.map = guarded(cfg.map_path, [&] {
    return std::make_shared<const RetargetMap>(load_retarget_map(cfg.map_path, *a.scheme, *a.rig));
  });
  if (cfg.calibration_path)
    a.calibration = guarded(*cfg.calibration_path, [&] { return load_calibration_file(*cfg.calibration_path); });
  return a;
}

inline std::unique_ptr<FrameSource> make_source(const EngineConfig& cfg, const EngineAssets& a) {
  const auto& loc = cfg.input.locations;
  switch (cfg.input.kind) {
    case InputSpec::Kind::File: return std::make_unique<RecordedSource>(loc.at(0), a.scheme);
    case InputSpec::Kind::DualFile: return std::make_unique<StereoRecordedSource>(loc.at(0), loc.at(1), a.scheme);
    case InputSpec::Kind::Socket: return std::make_unique<SocketSource>(net::parse_endpoint(loc.at(0)), a.scheme);
    case InputSpec::Kind::DualSocket:
      return std::make_unique<StereoSocketSource>(net::parse_endpoint(loc.at(0)), net::parse_endpoint(loc.at(1)),
                                                  a.scheme);
    case InputSpec::Kind::Synthetic:
      if (cfg.identity_stages)
        return std::make_unique<ConfigTickSource>(neutral_configuration(*a.rig), cfg.synthetic_fps,
                                                  cfg.input.synthetic_seconds);
      return std::make_unique<SyntheticSource>(a.scheme, cfg.synthetic_fps, cfg.input.synthetic_seconds);
  }
  throw Error(ErrorCode::ConfigError, "unsupported input");
}

inline std::unique_ptr<FrameSink> make_sink(const EngineConfig& cfg, const EngineAssets& a, std::ostream& text_out) {
  switch (cfg.output.kind) {
    case OutputSpec::Kind::File: return std::make_unique<RecordSink>(cfg.output.location);
    case OutputSpec::Kind::Socket: return std::make_unique<SocketSink>(net::parse_endpoint(cfg.output.location));
    case OutputSpec::Kind::Stdout: {
      std::vector<std::string> names;
      for (const auto& j : a.rig->joints()) names.push_back(j.name);
      return std::make_unique<TextSink>(text_out, std::move(names));
    }
    case OutputSpec::Kind::None: return std::make_unique<NullSink>();
  }
  throw Error(ErrorCode::ConfigError, "unsupported output");
}

inline SinkOptions sink_options(const EngineConfig& cfg, const EngineAssets& a) {
  SinkOptions o;
  o.period_us = static_cast<std::int64_t>(std::llround(1e6 / cfg.sink_fps));
  o.policy.fresh_ms = cfg.fresh_ms;
  o.policy.hold_ms = cfg.hold_ms;
  o.policy.neutral = neutral_configuration(*a.rig);
  return o;
}

inline RunOptions run_options(const EngineConfig& cfg) {
  RunOptions o;
  o.mode = cfg.effective_mode();
  o.speed = cfg.speed;
  return o;
}

/// source -> lift -> retarget -> ik -> sink. `sink` overrides the output spec.
inline std::unique_ptr<Pipeline> build_pipeline(const EngineConfig& cfg, const EngineAssets& a,
                                                std::unique_ptr<FrameSink> sink = nullptr,
                                                std::ostream& text_out = std::cout) {
  auto p = std::make_unique<Pipeline>();
  p->set_source("source", make_source(cfg, a));
  if (cfg.identity_stages) {
    for (const char* name : {"lift", "retarget", "ik"}) p->add_stage(name, std::make_unique<IdentityStage>());
  } else {
    LiftOptions lift;
    lift.sync_window_us = static_cast<std::uint64_t>(std::llround(cfg.sync_window_ms * 1000.0));
    lift.confidence_threshold = cfg.confidence_threshold;
    p->add_stage("lift", std::make_unique<LiftStage>(a.scheme, a.calibration, lift, cfg.input_z_up));
    p->add_stage("retarget", std::make_unique<RetargetStage>(a.map, cfg.confidence_threshold));
    IkOptions ik;
    ik.max_iterations = cfg.ik_max_iterations;
    ik.position_tolerance = cfg.ik_tolerance;
    p->add_stage("ik", std::make_unique<IkStage>(a.rig, a.map, ik));
  }
  p->set_sink("sink", sink ? std::move(sink) : make_sink(cfg, a, text_out), sink_options(cfg, a));
  p->chain();
  return p;
}

}  // namespace posebridge
