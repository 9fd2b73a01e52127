// SPDX-License-Identifier: Apache-2.0
//
// Staged dataflow: one source, any number of middle stages, one sink, joined
// by latest-value mailboxes. The sink emits on every fresh arrival and, when
// upstream goes quiet, keeps emitting at its own cadence under the stale
// policy. Runs either threaded (one thread per stage) or in a deterministic
// step mode where a virtual clock advances one tick per scheduler round and
// every stage steps once per round, in graph order.
#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "posebridge/error.hpp"
#include "posebridge/mailbox.hpp"
#include "posebridge/metrics.hpp"
#include "posebridge/retarget.hpp"
#include "posebridge/skeleton.hpp"
#include "posebridge/stale.hpp"
#include "posebridge/wire.hpp"

namespace posebridge {

struct StereoFrames {
  KeypointFrame a;
  KeypointFrame b;
};

/// Joint configuration plus the exact bytes it travels as.
struct ConfigFrame {
  JointConfiguration config;
  wire::WireFrame wire;
};

inline ConfigFrame make_config_frame(JointConfiguration config) {
  ConfigFrame f{std::move(config), {}};
  f.wire = wire::to_wire(f.config);
  return f;
}

using Packet = std::variant<KeypointFrame, StereoFrames, NormalizedPose, ConfigFrame>;

struct Envelope {
  Packet payload;
  std::uint32_t sequence = 0;
  std::uint64_t source_timestamp_us = 0;
  std::chrono::steady_clock::time_point ingest{};
};

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  /// Next envelope, nullopt at the end of input. Throws on corrupt input.
  virtual std::optional<Envelope> read() = 0;
  /// Paced sources are replayed on their own timestamps; live ones are
  /// forwarded as soon as they arrive.
  virtual bool paced() const { return true; }
};

class Stage {
 public:
  virtual ~Stage() = default;
  /// Throwing posebridge::Error rejects just this frame. Any other exception
  /// takes the stage down.
  virtual std::optional<Envelope> process(Envelope in) = 0;
};

struct SinkRecord {
  ConfigFrame frame;
  StaleStatus status = StaleStatus::Fresh;
  std::int64_t emit_us = 0;  // pipeline clock
};

class FrameSink {
 public:
  virtual ~FrameSink() = default;
  virtual void write(const SinkRecord& record) = 0;
  virtual void flush() {}
};

struct SinkOptions {
  std::int64_t period_us = 33'333;
  /// Extra wait before the first heartbeat after a fresh frame, so ordinary
  /// arrival jitter does not produce duplicate outputs. Default: period / 2.
  std::optional<std::int64_t> slack_us;
  StalePolicy policy;
};

/// Scripted faults for one stage, in pipeline-clock microseconds.
struct FaultPlan {
  std::vector<std::pair<std::int64_t, std::int64_t>> stalls;  // [begin, end)
  std::optional<std::int64_t> kill_at_us;

  bool stalled(std::int64_t now) const {
    for (const auto& [b, e] : stalls)
      if (now >= b && now < e) return true;
    return false;
  }
  bool killed(std::int64_t now) const { return kill_at_us && now >= *kill_at_us; }
};

enum class RunMode { Step, Threaded };

struct RunOptions {
  RunMode mode = RunMode::Step;
  std::int64_t tick_us = 1'000;  // step mode only
  double speed = 1.0;            // replay speed multiplier for paced sources
  std::optional<std::int64_t> max_duration_us;
  std::uint64_t max_rounds = 100'000'000;  // step-mode guard
};

namespace detail {

enum class NodeState { Running, Finished, Failed };

inline const char* to_string(NodeState s) {
  switch (s) {
    case NodeState::Running: return "running";
    case NodeState::Finished: return "finished";
    case NodeState::Failed: return "failed";
  }
  return "?";
}

class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t now_us() const = 0;
};

class VirtualClock final : public Clock {
 public:
  std::int64_t now_us() const override { return now_; }
  void set(std::int64_t t) { now_ = t; }

 private:
  std::int64_t now_ = 0;
};

class SteadyClock final : public Clock {
 public:
  SteadyClock() : start_(std::chrono::steady_clock::now()) {}
  std::int64_t now_us() const override {
    return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

struct Node {
  enum class Kind { Source, Middle, Sink };
  std::string name;
  Kind kind = Kind::Middle;
  std::unique_ptr<FrameSource> source;
  std::unique_ptr<Stage> stage;
  std::unique_ptr<FrameSink> sink;
  FaultPlan fault;

  std::atomic<NodeState> state{NodeState::Running};
  std::optional<MailboxReader<Envelope>> in;
  std::optional<MailboxWriter<Envelope>> out;

  mutable std::mutex mu;  // guards the counters below for snapshots
  std::uint64_t frames_in = 0;
  std::uint64_t frames_out = 0;
  std::uint64_t drops = 0;
  std::uint64_t errors = 0;
  LatencyHistogram latency;

  // source pacing
  std::optional<Envelope> pending;
  std::int64_t pending_due = 0;
  std::optional<std::uint64_t> origin_ts;

  // sink state
  SinkOptions sink_opts;
  std::optional<ConfigFrame> last_good;
  std::int64_t last_arrival = 0;
  std::int64_t next_heartbeat = 0;
  bool upstream_done = false;
  std::uint64_t emitted = 0, fresh = 0, stale = 0, starved = 0;
  LatencyHistogram end_to_end;

  void close_all() {
    if (in) in->close();
    if (out) out->close();
  }
};

}  // namespace detail

class Pipeline {
 public:
  Pipeline() = default;
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  void set_source(std::string name, std::unique_ptr<FrameSource> source) {
    if (source_) throw Error(ErrorCode::ConfigError, "pipeline already has a source");
    auto n = make_node(std::move(name), detail::Node::Kind::Source);
    n->source = std::move(source);
    source_ = n.get();
    nodes_.push_back(std::move(n));
  }

  void add_stage(std::string name, std::unique_ptr<Stage> stage) {
    auto n = make_node(std::move(name), detail::Node::Kind::Middle);
    n->stage = std::move(stage);
    nodes_.push_back(std::move(n));
  }

  void set_sink(std::string name, std::unique_ptr<FrameSink> sink, SinkOptions opts) {
    if (sink_) throw Error(ErrorCode::ConfigError, "pipeline already has a sink");
    opts.policy.validate();
    if (opts.period_us <= 0) throw Error(ErrorCode::ConfigError, "sink period must be positive");
    auto n = make_node(std::move(name), detail::Node::Kind::Sink);
    n->sink = std::move(sink);
    n->sink_opts = std::move(opts);
    sink_ = n.get();
    nodes_.push_back(std::move(n));
  }

  void connect(const std::string& from, const std::string& to) { edges_.emplace_back(from, to); }

  /// Connects source -> stages (in insertion order) -> sink.
  void chain() {
    std::string prev;
    for (const auto& n : nodes_)
      if (n->kind == detail::Node::Kind::Source) prev = n->name;
    for (const auto& n : nodes_)
      if (n->kind == detail::Node::Kind::Middle) {
        connect(prev, n->name);
        prev = n->name;
      }
    for (const auto& n : nodes_)
      if (n->kind == detail::Node::Kind::Sink) connect(prev, n->name);
  }

  void inject_fault(const std::string& stage, FaultPlan plan) { faults_[stage] = std::move(plan); }

  /// Asks a running pipeline to wind down: the source stops reading and the
  /// remaining frames drain to the sink.
  void request_stop() { stop_.store(true); }

  /// Runs until the source is exhausted (or stopped) and the sink has drained.
  MetricsSnapshot run(const RunOptions& opts = {}) {
    if (ran_) throw Error(ErrorCode::ConfigError, "a pipeline runs once");
    ran_ = true;
    validate_and_order();
    if (opts.speed <= 0.0) throw Error(ErrorCode::ConfigError, "speed must be positive");
    speed_ = opts.speed;
    for (auto& [name, plan] : faults_) node(name).fault = plan;
    for (std::size_t i = 0; i + 1 < order_.size(); ++i) {
      auto [w, r] = make_mailbox<Envelope>();
      order_[i]->out.emplace(std::move(w));
      order_[i + 1]->in.emplace(std::move(r));
    }
    sink_->next_heartbeat = heartbeat_after(0);

    const auto wall_start = std::chrono::steady_clock::now();
    std::int64_t end_us = 0;
    if (opts.mode == RunMode::Step) {
      for (auto* n : order_)
        if (n->kind == detail::Node::Kind::Source && !n->source->paced())
          throw Error(ErrorCode::ConfigError, "step mode needs a replayable source");
      end_us = run_step(opts);
    } else {
      end_us = run_threaded(opts);
    }
    if (sink_->state == detail::NodeState::Running && sink_->upstream_done) sink_->state = detail::NodeState::Finished;
    for (auto* n : order_)
      if (n->sink) n->sink->flush();
    auto snap = snapshot();
    snap.elapsed_us = opts.mode == RunMode::Step
                          ? static_cast<double>(end_us)
                          : std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - wall_start).count();
    return snap;
  }

  /// Consistent-per-stage snapshot; safe to call from another thread while
  /// the pipeline runs.
  MetricsSnapshot snapshot() const {
    MetricsSnapshot m;
    for (const auto* n : ordered_nodes()) {
      StageSnapshot s;
      s.name = n->name;
      {
        std::lock_guard lock(n->mu);
        s.frames_in = n->frames_in;
        s.frames_out = n->frames_out;
        s.drops = n->drops;
        s.errors = n->errors;
        s.latency = n->latency;
        if (n->kind == detail::Node::Kind::Sink) {
          m.emitted = n->emitted;
          m.fresh = n->fresh;
          m.stale = n->stale;
          m.starved = n->starved;
          m.end_to_end = n->end_to_end;
        }
      }
      if (n->in) {
        const auto c = n->in->counters();
        s.frames_in += c.puts;
        s.drops += c.drops;
      }
      s.state = detail::to_string(n->state.load());
      m.stages.push_back(std::move(s));
    }
    std::lock_guard lock(failures_mu_);
    m.failures = failures_;
    return m;
  }

 private:
  using Node = detail::Node;

  std::unique_ptr<Node> make_node(std::string name, Node::Kind kind) {
    for (const auto& n : nodes_)
      if (n->name == name) throw Error(ErrorCode::ConfigError, "duplicate stage name '" + name + "'");
    auto n = std::make_unique<Node>();
    n->name = std::move(name);
    n->kind = kind;
    return n;
  }

  Node& node(const std::string& name) {
    for (auto& n : nodes_)
      if (n->name == name) return *n;
    throw Error(ErrorCode::ConfigError, "unknown stage '" + name + "'");
  }

  // Graph order once the pipeline has run, insertion order before.
  std::vector<const Node*> ordered_nodes() const {
    std::vector<const Node*> v;
    if (!order_.empty()) return {order_.begin(), order_.end()};
    for (const auto& n : nodes_) v.push_back(n.get());
    return v;
  }

  // The graph must be a single path from the source to the sink covering
  // every stage.
  void validate_and_order() {
    if (!source_) throw Error(ErrorCode::ConfigError, "pipeline has no source");
    if (!sink_) throw Error(ErrorCode::ConfigError, "pipeline has no sink");
    std::map<std::string, std::string> next;
    std::set<std::string> has_input;
    for (const auto& [from, to] : edges_) {
      Node& a = node(from);
      Node& b = node(to);
      if (a.kind == Node::Kind::Sink) throw Error(ErrorCode::ConfigError, "sink '" + from + "' cannot have outputs");
      if (b.kind == Node::Kind::Source) throw Error(ErrorCode::ConfigError, "source '" + to + "' cannot have inputs");
      if (!next.emplace(from, to).second) throw Error(ErrorCode::ConfigError, "stage '" + from + "' has two outputs");
      if (!has_input.insert(to).second) throw Error(ErrorCode::ConfigError, "stage '" + to + "' has two inputs");
    }
    std::set<std::string> visited;
    for (Node* cur = source_;;) {
      if (!visited.insert(cur->name).second) throw Error(ErrorCode::ConfigError, "stage graph contains a cycle");
      order_.push_back(cur);
      if (cur == sink_) break;
      auto it = next.find(cur->name);
      if (it == next.end()) throw Error(ErrorCode::ConfigError, "stage '" + cur->name + "' does not reach the sink");
      cur = &node(it->second);
    }
    if (order_.size() != nodes_.size()) throw Error(ErrorCode::ConfigError, "some stages are not on the source-sink path");
  }

  std::int64_t heartbeat_after(std::int64_t t) const {
    return t + sink_->sink_opts.period_us + sink_->sink_opts.slack_us.value_or(sink_->sink_opts.period_us / 2);
  }

  void fail(Node& n, const std::string& reason, std::int64_t now) {
    n.state = detail::NodeState::Failed;
    n.close_all();
    std::lock_guard lock(failures_mu_);
    failures_.push_back({n.name, reason, now});
  }

  void finish(Node& n) {
    n.state = detail::NodeState::Finished;
    n.close_all();
  }

  // Returns true when a fault kept the node from stepping.
  bool apply_faults(Node& n, std::int64_t now) {
    if (n.fault.killed(now)) {
      fail(n, "killed by fault injection", now);
      return true;
    }
    return n.fault.stalled(now);
  }

  // ---- source ------------------------------------------------------------

  void source_step(Node& n, const detail::Clock& clock) {
    const std::int64_t now = clock.now_us();
    if (n.state != detail::NodeState::Running || apply_faults(n, now)) return;
    while (true) {
      if (!n.pending) {
        if (stop_.load()) {
          finish(n);
          return;
        }
        try {
          n.pending = n.source->read();
        } catch (const std::exception& e) {
          fail(n, e.what(), now);
          return;
        }
        if (!n.pending) {
          finish(n);
          return;
        }
        {
          std::lock_guard lock(n.mu);
          ++n.frames_in;
        }
        if (n.source->paced()) {
          const std::uint64_t ts = n.pending->source_timestamp_us;
          if (!n.origin_ts) n.origin_ts = ts;
          const double rel = ts >= *n.origin_ts ? static_cast<double>(ts - *n.origin_ts) : 0.0;
          n.pending_due = static_cast<std::int64_t>(rel / speed_);
        } else {
          n.pending_due = clock.now_us();
        }
      }
      if (n.pending_due > clock.now_us()) return;
      Envelope env = std::move(*n.pending);
      n.pending.reset();
      env.ingest = std::chrono::steady_clock::now();
      try {
        n.out->put(std::move(env));
        std::lock_guard lock(n.mu);
        ++n.frames_out;
      } catch (const Error&) {
        std::lock_guard lock(n.mu);
        ++n.drops;
      }
    }
  }

  // ---- middle ------------------------------------------------------------

  template <class TakeFn>
  void middle_step(Node& n, const detail::Clock& clock, TakeFn&& take) {
    const std::int64_t now = clock.now_us();
    if (n.state != detail::NodeState::Running || apply_faults(n, now)) return;
    std::optional<Taken<Envelope>> t;
    try {
      t = take(*n.in);
    } catch (const Error&) {
      finish(n);  // upstream is gone and drained
      return;
    }
    if (!t) return;
    const auto t0 = std::chrono::steady_clock::now();
    std::optional<Envelope> result;
    try {
      result = n.stage->process(std::move(t->value));
    } catch (const Error&) {
      std::lock_guard lock(n.mu);
      ++n.errors;
      ++n.drops;
      return;
    } catch (const std::exception& e) {
      fail(n, std::string("stage crashed: ") + e.what(), clock.now_us());
      return;
    }
    {
      std::lock_guard lock(n.mu);
      n.latency.record(std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count());
    }
    if (!result) {
      std::lock_guard lock(n.mu);
      ++n.drops;
      return;
    }
    try {
      n.out->put(std::move(*result));
      std::lock_guard lock(n.mu);
      ++n.frames_out;
    } catch (const Error&) {
      {
        std::lock_guard lock(n.mu);
        ++n.drops;
      }
      finish(n);  // downstream is gone
    }
  }

  // ---- sink --------------------------------------------------------------

  void emit(Node& n, ConfigFrame frame, StaleStatus status, std::int64_t now) {
    try {
      n.sink->write({std::move(frame), status, now});
    } catch (const std::exception& e) {
      fail(n, std::string("sink write failed: ") + e.what(), now);
      return;
    }
    std::lock_guard lock(n.mu);
    ++n.emitted;
    switch (status) {
      case StaleStatus::Fresh: ++n.fresh; break;
      case StaleStatus::Stale: ++n.stale; break;
      case StaleStatus::Starved: ++n.starved; break;
    }
  }

  ConfigFrame degrade(const Node& n, const StaleDecision& d) const {
    ConfigFrame f;
    if (d.status == StaleStatus::Starved) {
      f = make_config_frame(d.output);
      if (n.last_good) {
        f.config.timestamp_us = n.last_good->config.timestamp_us;
        f.config.sequence = n.last_good->config.sequence;
        f.wire.timestamp_us = f.config.timestamp_us;
        f.wire.sequence = f.config.sequence;
      }
    } else {
      f = *n.last_good;
      f.config.stale_flag = d.output.stale_flag;
    }
    for (auto& e : f.wire.entries) e.confidence = f.config.stale_flag ? 0.f : 1.f;
    return f;
  }

  template <class TakeFn>
  void sink_step(Node& n, const detail::Clock& clock, TakeFn&& take) {
    if (n.state != detail::NodeState::Running || apply_faults(n, clock.now_us())) return;
    std::optional<Taken<Envelope>> t;
    if (!n.upstream_done) {
      try {
        t = take(*n.in);
      } catch (const Error&) {
        n.upstream_done = true;
      }
    }
    const std::int64_t now = clock.now_us();
    if (t) {
      auto* cf = std::get_if<ConfigFrame>(&t->value.payload);
      if (!cf) {
        std::lock_guard lock(n.mu);
        ++n.errors;
        ++n.drops;
      } else {
        n.last_good = std::move(*cf);
        n.last_good->config.stale_flag = false;
        n.last_arrival = now;
        n.next_heartbeat = heartbeat_after(now);
        {
          std::lock_guard lock(n.mu);
          ++n.frames_out;
          n.end_to_end.record(
              std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t->value.ingest).count());
        }
        emit(n, *n.last_good, StaleStatus::Fresh, now);
        return;
      }
    }
    if (now < n.next_heartbeat) return;
    std::optional<JointConfiguration> last;
    if (n.last_good) last = n.last_good->config;
    const double age_ms = static_cast<double>(now - n.last_arrival) / 1000.0;
    const StaleDecision d = apply_stale_policy(last, age_ms, n.sink_opts.policy);
    emit(n, degrade(n, d), d.status, now);
    n.next_heartbeat += n.sink_opts.period_us;
    if (n.next_heartbeat <= now) n.next_heartbeat = now + n.sink_opts.period_us;
  }

  bool done() const {
    return source_->state != detail::NodeState::Running &&
           (sink_->state != detail::NodeState::Running || sink_->upstream_done);
  }

  // ---- schedulers --------------------------------------------------------

  std::int64_t run_step(const RunOptions& opts) {
    detail::VirtualClock clock;
    auto poll = [](MailboxReader<Envelope>& r) { return r.try_take(); };
    std::int64_t now = 0;
    for (std::uint64_t round = 0; round < opts.max_rounds; ++round, now += opts.tick_us) {
      clock.set(now);
      if (opts.max_duration_us && now >= *opts.max_duration_us) stop_.store(true);
      for (Node* n : order_) {
        switch (n->kind) {
          case Node::Kind::Source: source_step(*n, clock); break;
          case Node::Kind::Middle: middle_step(*n, clock, poll); break;
          case Node::Kind::Sink: sink_step(*n, clock, poll); break;
        }
      }
      if (done()) return now;
    }
    {
      std::lock_guard lock(failures_mu_);
      failures_.push_back({"scheduler", "step limit reached before the pipeline drained", now});
    }
    for (Node* n : order_) n->close_all();
    return now;
  }

  std::int64_t run_threaded(const RunOptions& opts) {
    detail::SteadyClock clock;
    constexpr auto kPoll = std::chrono::milliseconds(2);
    std::vector<std::thread> threads;
    std::atomic<bool> source_done{false};
    for (Node* n : order_) {
      threads.emplace_back([this, n, &clock, &opts, &source_done, kPoll] {
        auto sleep_a_bit = [&](std::int64_t until_us) {
          const std::int64_t delta = std::clamp<std::int64_t>(until_us - clock.now_us(), 0, 2'000);
          std::this_thread::sleep_for(std::chrono::microseconds(delta));
        };
        switch (n->kind) {
          case Node::Kind::Source:
            while (n->state == detail::NodeState::Running) {
              if (opts.max_duration_us && clock.now_us() >= *opts.max_duration_us) stop_.store(true);
              source_step(*n, clock);
              if (n->state == detail::NodeState::Running)
                sleep_a_bit(n->pending ? n->pending_due : clock.now_us() + 2'000);
            }
            source_done.store(true);
            break;
          case Node::Kind::Middle: {
            auto wait = [&](MailboxReader<Envelope>& r) { return r.take_for(kPoll); };
            while (n->state == detail::NodeState::Running) {
              if (n->fault.stalled(clock.now_us())) std::this_thread::sleep_for(kPoll);
              middle_step(*n, clock, wait);
            }
            break;
          }
          case Node::Kind::Sink: {
            auto wait = [&](MailboxReader<Envelope>& r) {
              const std::int64_t until = n->next_heartbeat - clock.now_us();
              return r.take_for(std::chrono::microseconds(std::clamp<std::int64_t>(until, 0, 2'000)));
            };
            while (n->state == detail::NodeState::Running && !(source_done.load() && n->upstream_done)) {
              if (n->fault.stalled(clock.now_us()) || n->upstream_done) sleep_a_bit(n->next_heartbeat);
              sink_step(*n, clock, wait);
            }
            break;
          }
        }
      });
    }
    for (auto& t : threads) t.join();
    return clock.now_us();
  }

  std::vector<std::unique_ptr<Node>> nodes_;
  std::vector<std::pair<std::string, std::string>> edges_;
  std::map<std::string, FaultPlan> faults_;
  std::vector<Node*> order_;
  Node* source_ = nullptr;
  Node* sink_ = nullptr;
  std::atomic<bool> stop_{false};
  bool ran_ = false;
  double speed_ = 1.0;
  mutable std::mutex failures_mu_;
  std::vector<StageFailure> failures_;
};

}  // namespace posebridge
