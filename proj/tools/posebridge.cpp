// SPDX-License-Identifier: Apache-2.0
//
// posebridge: run, replay, bench and one-shot math from the command line.
//
// Exit codes: 0 success, 1 usage, 2 configuration, 3 runtime.
// Log level comes from POSEBRIDGE_LOG (trace|debug|info|warn|error|off).
#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "posebridge/config.hpp"
#include "posebridge/retarget.hpp"
#include "posebridge/stereo.hpp"

#ifndef POSEBRIDGE_VERSION
#define POSEBRIDGE_VERSION "0.0.0"
#endif

namespace pb = posebridge;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kRuntime = 3 };

int exit_code_for(pb::ErrorCode code) {
  switch (code) {
    case pb::ErrorCode::ConfigError:
    case pb::ErrorCode::BindError:
    case pb::ErrorCode::InvalidScheme:
    case pb::ErrorCode::InvalidRig:
    case pb::ErrorCode::InvalidConstraint:
    case pb::ErrorCode::InvalidRetargetMap: return kConfig;
    default: return kRuntime;
  }
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("posebridge");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("POSEBRIDGE_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only honour "off" when asked for
    if (level != spdlog::level::off || std::string_view(env) == "off")
      spdlog::set_level(level);
    else
      spdlog::warn("POSEBRIDGE_LOG='{}' is not a level name, keeping warn", env);
  }
}

std::string default_data_dir() {
  if (const char* env = std::getenv("POSEBRIDGE_DATA")) return env;
  return POSEBRIDGE_DATA_DIR;
}

std::atomic<pb::Pipeline*> g_running{nullptr};

extern "C" void on_signal(int) {
  if (auto* p = g_running.load()) p->request_stop();
}

json vec_json(const pb::Vec3& v) { return json::array({v.x, v.y, v.z}); }

pb::Vec3 to_vec3(const std::vector<double>& v) { return {v.at(0), v.at(1), v.at(2)}; }

// Engine flags mirror EngineConfig one-to-one. Each flag records an
// override that is applied after the config file, so the order is
// defaults < file < flags.
struct EngineFlags {
  std::string config_file;
  std::string data_dir = default_data_dir();
  std::vector<std::function<void(pb::EngineConfig&)>> overrides;

  template <class T>
  CLI::Option* add(CLI::App& app, const std::string& name, std::function<void(pb::EngineConfig&, const T&)> set,
                   const std::string& help) {
    return app.add_option_function<T>(
        name, [this, set](const T& v) { overrides.push_back([set, v](pb::EngineConfig& c) { set(c, v); }); }, help);
  }

  void attach(CLI::App& app, bool with_io) {
    app.add_option("--config", config_file, "JSON config file (overridden by flags)")->check(CLI::ExistingFile);
    app.add_option("--data", data_dir, "directory holding the default scheme, rig and map");
    add<std::string>(app, "--scheme", [](auto& c, auto& v) { c.scheme_path = v; }, "landmark scheme file");
    add<std::string>(app, "--rig", [](auto& c, auto& v) { c.rig_path = v; }, "avatar rig file");
    add<std::string>(app, "--map", [](auto& c, auto& v) { c.map_path = v; }, "retarget map file");
    add<std::string>(app, "--calibration", [](auto& c, auto& v) { c.calibration_path = v; }, "stereo calibration file");
    if (with_io) {
      add<std::string>(app, "-i,--input", [](auto& c, auto& v) { c.input = pb::parse_input_spec(v); },
                       "file:PATH | dual-file:A,B | socket:HOST:PORT | dual-socket:EP,EP | synthetic:SECONDS");
      add<std::string>(app, "-o,--output", [](auto& c, auto& v) { c.output = pb::parse_output_spec(v); },
                       "file:PATH | socket:HOST:PORT | stdout | none");
      add<std::string>(app, "--mode",
                       [](auto& c, auto& v) {
                         if (v != "step" && v != "threaded")
                           throw pb::Error(pb::ErrorCode::ConfigError, "mode must be step or threaded");
                         c.mode = v == "step" ? pb::RunMode::Step : pb::RunMode::Threaded;
                       },
                       "step (deterministic) or threaded");
      add<double>(app, "--speed", [](auto& c, auto& v) { c.speed = v; }, "replay speed multiplier for recordings");
    }
    add<double>(app, "--fresh-ms", [](auto& c, auto& v) { c.fresh_ms = v; }, "stale.fresh_ms");
    add<double>(app, "--hold-ms", [](auto& c, auto& v) { c.hold_ms = v; }, "stale.hold_ms");
    add<double>(app, "--sink-fps", [](auto& c, auto& v) { c.sink_fps = v; }, "sink heartbeat rate");
    add<int>(app, "--ik-max-iterations", [](auto& c, auto& v) { c.ik_max_iterations = v; }, "ik.max_iterations");
    add<double>(app, "--ik-tolerance", [](auto& c, auto& v) { c.ik_tolerance = v; }, "ik.tolerance in meters");
    add<double>(app, "--confidence-threshold", [](auto& c, auto& v) { c.confidence_threshold = v; },
                "minimum landmark confidence");
    add<double>(app, "--sync-window-ms", [](auto& c, auto& v) { c.sync_window_ms = v; }, "stereo pairing window");
    add<std::string>(app, "--input-up-axis",
                     [](auto& c, auto& v) {
                       if (v != "y" && v != "z") throw pb::Error(pb::ErrorCode::ConfigError, "up axis must be y or z");
                       c.input_z_up = v == "z";
                     },
                     "y or z");
  }

  pb::EngineConfig resolve() const {
    pb::EngineConfig cfg = pb::EngineConfig::defaults(data_dir);
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      json doc;
      try {
        doc = json::parse(in);
      } catch (const json::exception& e) {
        throw pb::Error(pb::ErrorCode::ConfigError, config_file + ": " + e.what());
      }
      cfg.merge_json(doc);
    }
    for (const auto& o : overrides) o(cfg);
    return cfg;
  }
};

void emit_metrics(const pb::MetricsSnapshot& snap, const std::string& path) {
  const std::string text = to_json(snap).dump(2) + "\n";
  if (path.empty()) {
    std::cerr << text;
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw pb::Error(pb::ErrorCode::IoError, "cannot write metrics to '" + path + "'");
  out << text;
}

// ---------------------------------------------------------------------------
// commands

int cmd_run(const EngineFlags& flags, const std::string& metrics_path) {
  pb::EngineConfig cfg = flags.resolve();
  if (cfg.input.kind == pb::InputSpec::Kind::File && cfg.input.locations.empty())
    throw pb::Error(pb::ErrorCode::ConfigError, "no input given (use --input or the config file)");
  cfg.validate();
  const pb::EngineAssets assets = pb::load_assets(cfg);
  auto pipeline = pb::build_pipeline(cfg, assets);
  spdlog::info("running {} mode", cfg.effective_mode() == pb::RunMode::Step ? "step" : "threaded");

  g_running.store(pipeline.get());
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const pb::MetricsSnapshot snap = pipeline->run(pb::run_options(cfg));
  g_running.store(nullptr);

  emit_metrics(snap, metrics_path);
  for (const auto& f : snap.failures) spdlog::error("stage '{}' failed at {} us: {}", f.stage, f.at_us, f.reason);
  return snap.failures.empty() ? kOk : kRuntime;
}

int cmd_replay(const std::string& input, const std::string& to, double speed, double connect_timeout_s) {
  if (!(speed > 0.0)) throw pb::Error(pb::ErrorCode::ConfigError, "speed must be positive");
  std::ifstream in(input, std::ios::binary);
  if (!in) throw pb::Error(pb::ErrorCode::ConfigError, "recording not found: " + input);
  const pb::net::Endpoint ep = pb::net::parse_endpoint(to);

  // the receiving engine may still be starting up
  std::unique_ptr<pb::net::FrameStream> stream;
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(connect_timeout_s);
  while (!stream) {
    try {
      stream = pb::net::FrameStream::connect(ep);
    } catch (const pb::Error& e) {
      if (e.code() != pb::ErrorCode::BindError || std::chrono::steady_clock::now() >= deadline) throw;
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  }

  pb::wire::RecordReader reader(pb::wire::istream_source(in));
  std::uint64_t sent = 0;
  try {
    const auto stats = pb::replay_records(reader, [&](const pb::wire::WireFrame& w) { stream->write(w), ++sent; }, speed);
    stream->shutdown();
    std::cerr << json{{"frames", stats.frames}, {"wall_s", stats.wall_seconds}, {"speed", speed}}.dump() << "\n";
  } catch (const pb::Error&) {
    stream->shutdown();
    spdlog::error("replay stopped after {} frames", sent);
    throw;
  }
  return kOk;
}

int cmd_bench(const EngineFlags& flags, double duration_s, double fps, bool identity, std::optional<double> budget_ms) {
  pb::EngineConfig cfg = flags.resolve();
  cfg.input = pb::parse_input_spec("synthetic:" + std::to_string(duration_s));
  cfg.output = {pb::OutputSpec::Kind::None, {}};
  cfg.synthetic_fps = fps;
  cfg.identity_stages = identity;
  cfg.mode = pb::RunMode::Threaded;
  const double budget = budget_ms.value_or(1000.0 / fps);
  cfg.validate();

  json report{{"duration_s", duration_s}, {"source_fps", fps}, {"identity", identity}, {"budget_ms", budget}};
  if (duration_s <= 0.0) {
    report["frames"] = 0;
    report["stages"] = json::array();
    std::cout << report.dump(2) << "\n";
    return kOk;
  }

  const pb::EngineAssets assets = pb::load_assets(cfg);
  auto pipeline = pb::build_pipeline(cfg, assets);
  g_running.store(pipeline.get());
  std::signal(SIGINT, on_signal);
  const pb::MetricsSnapshot snap = pipeline->run(pb::run_options(cfg));
  g_running.store(nullptr);

  json stages = json::array();
  for (const auto& s : snap.stages)
    stages.push_back({{"name", s.name},
                      {"frames_out", s.frames_out},
                      {"drops", s.drops},
                      {"p50_us", s.latency.quantile(0.50)},
                      {"p99_us", s.latency.quantile(0.99)}});
  const double p99_ms = snap.end_to_end.quantile(0.99) / 1000.0;
  report["frames"] = snap.fresh;
  report["fps"] = snap.output_fps();
  report["stages"] = stages;
  report["end_to_end"] = {{"p50_us", snap.end_to_end.quantile(0.50)}, {"p99_us", snap.end_to_end.quantile(0.99)}};
  report["within_budget"] = p99_ms <= budget;
  if (p99_ms > budget) spdlog::warn("end-to-end p99 {:.3f} ms exceeds the {:.3f} ms frame budget", p99_ms, budget);
  std::cout << report.dump(2) << "\n";
  return snap.failures.empty() ? kOk : kRuntime;
}

int cmd_triangulate(const std::string& calibration, const std::vector<double>& a, const std::vector<double>& b) {
  pb::CameraPair pair = [&] {
    try {
      return pb::load_calibration_file(calibration);
    } catch (const pb::Error& e) {
      throw pb::Error(pb::ErrorCode::ConfigError, calibration + ": " + e.what());
    }
  }();
  const pb::Triangulation t = pb::triangulate({a.at(0), a.at(1)}, {b.at(0), b.at(1)}, pair);
  std::cout << json{{"point", vec_json(t.point)}, {"reprojection_error_px", t.reprojection_error}}.dump() << "\n";
  return kOk;
}

int cmd_retarget(const std::vector<double>& basis, const std::vector<double>& joint,
                 const std::vector<double>& engine_basis) {
  const pb::BasisFrame src = pb::basis_frame(to_vec3(basis));
  const pb::NormalizedJoint jn = pb::normalize_joint(to_vec3(joint), src);
  json out{{"theta", src.theta}, {"scale", src.scale}, {"normalized", vec_json(jn.value)}};
  if (!engine_basis.empty()) {
    const pb::BasisFrame dst = pb::basis_frame(to_vec3(engine_basis));
    out["engine_theta"] = dst.theta;
    out["engine_scale"] = dst.scale;
    out["retargeted"] = vec_json(pb::denormalize_joint(jn, dst));
  }
  std::cout << out.dump() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"posebridge: pose streams to avatar joint configurations"};
  app.require_subcommand(1);

  EngineFlags run_flags;
  std::string metrics_path;
  auto* run = app.add_subcommand("run", "run the engine until the input ends");
  run_flags.attach(*run, true);
  run->add_option("--metrics", metrics_path, "write the metrics report here instead of stderr");

  std::string replay_input, replay_to;
  double replay_speed = 1.0, connect_timeout = 5.0;
  auto* replay = app.add_subcommand("replay", "send a recording to a socket at its recorded cadence");
  replay->add_option("-i,--input", replay_input, "recorded stream")->required();
  replay->add_option("--to", replay_to, "HOST:PORT of the receiving engine")->required();
  replay->add_option("--speed", replay_speed, "cadence multiplier");
  replay->add_option("--connect-timeout", connect_timeout, "seconds to keep retrying the connection");

  EngineFlags bench_flags;
  double bench_duration = 10.0, bench_fps = 60.0;
  bool bench_identity = false;
  std::optional<double> budget_ms;
  auto* bench = app.add_subcommand("bench", "measure latency and throughput on the synthetic performer");
  bench_flags.attach(*bench, false);
  bench->add_option("--duration", bench_duration, "seconds of synthetic input");
  bench->add_option("--fps", bench_fps, "synthetic source rate");
  bench->add_flag("--identity", bench_identity, "pass-through stages (transport overhead only)");
  bench->add_option_function<double>("--budget-ms", [&](const double& v) { budget_ms = v; },
                                     "end-to-end p99 budget (default one source frame)");

  std::string calibration = default_data_dir() + "/calibration/desk_pair.json";
  std::vector<double> pa, pb_px;
  auto* tri = app.add_subcommand("triangulate", "lift one pixel pair to a 3D point");
  tri->add_option("--calibration", calibration, "stereo calibration file");
  tri->add_option("--a", pa, "pixel in camera a: U,V")->required()->expected(2)->delimiter(',');
  tri->add_option("--b", pb_px, "pixel in camera b: U,V")->required()->expected(2)->delimiter(',');

  std::vector<double> basis, joint, engine_basis;
  auto* rt = app.add_subcommand("retarget", "normalize a joint vector against a basis vector");
  rt->add_option("--basis", basis, "source basis X,Y,Z")->required()->expected(3)->delimiter(',');
  rt->add_option("--joint", joint, "source joint vector X,Y,Z")->required()->expected(3)->delimiter(',');
  rt->add_option("--engine-basis", engine_basis, "engine basis X,Y,Z; adds the retargeted vector")
      ->expected(3)
      ->delimiter(',');

  app.add_subcommand("version", "print version information");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  } catch (const pb::Error& e) {  // thrown by flag callbacks
    spdlog::error("{}", e.what());
    return exit_code_for(e.code());
  }

  try {
    if (*run) return cmd_run(run_flags, metrics_path);
    if (*replay) return cmd_replay(replay_input, replay_to, replay_speed, connect_timeout);
    if (*bench) return cmd_bench(bench_flags, bench_duration, bench_fps, bench_identity, budget_ms);
    if (*tri) return cmd_triangulate(calibration, pa, pb_px);
    if (*rt) return cmd_retarget(basis, joint, engine_basis);
    std::cout << "posebridge " << POSEBRIDGE_VERSION << " (wire protocol v" << int{pb::wire::kVersion} << ")\n";
    return kOk;
  } catch (const pb::Error& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kRuntime;
  }
}
