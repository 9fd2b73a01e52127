// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace posebridge {

/// Log-linear latency histogram over microseconds: 8 sub-buckets per power
/// of two, so quantiles are accurate to roughly 9%.
class LatencyHistogram {
 public:
  static constexpr int kSubBuckets = 8;
  static constexpr int kBuckets = 40 * kSubBuckets;

  void record(double micros) {
    if (!(micros >= 0.0)) micros = 0.0;
    ++counts_[static_cast<std::size_t>(bucket_of(micros))];
    ++count_;
    sum_ += micros;
    max_ = std::max(max_, micros);
  }

  std::uint64_t count() const noexcept { return count_; }
  double mean() const noexcept { return count_ ? sum_ / static_cast<double>(count_) : 0.0; }
  double max() const noexcept { return max_; }

  /// Upper edge of the bucket holding quantile q (clamped to the observed max).
  double quantile(double q) const {
    if (count_ == 0) return 0.0;
    const auto rank = static_cast<std::uint64_t>(std::ceil(q * static_cast<double>(count_)));
    std::uint64_t seen = 0;
    for (int b = 0; b < kBuckets; ++b) {
      seen += counts_[static_cast<std::size_t>(b)];
      if (seen >= std::max<std::uint64_t>(rank, 1)) return std::min(upper_edge(b), max_);
    }
    return max_;
  }

  void merge(const LatencyHistogram& o) {
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
    count_ += o.count_;
    sum_ += o.sum_;
    max_ = std::max(max_, o.max_);
  }

 private:
  static int bucket_of(double us) {
    if (us < 1.0) return 0;
    const int b = static_cast<int>(std::floor(std::log2(us) * kSubBuckets)) + 1;
    return std::min(b, kBuckets - 1);
  }
  static double upper_edge(int b) { return b == 0 ? 1.0 : std::exp2(static_cast<double>(b) / kSubBuckets); }

  std::array<std::uint64_t, kBuckets> counts_{};
  std::uint64_t count_ = 0;
  double sum_ = 0.0;
  double max_ = 0.0;
};

struct StageSnapshot {
  std::string name;
  std::uint64_t frames_in = 0;
  std::uint64_t frames_out = 0;
  std::uint64_t drops = 0;
  std::uint64_t errors = 0;  // frames rejected with a typed error (part of drops)
  LatencyHistogram latency;
  std::string state;  // running | finished | failed
};

struct StageFailure {
  std::string stage;
  std::string reason;
  std::int64_t at_us = 0;
};

/// Pipeline-wide report, produced at shutdown or on demand.
struct MetricsSnapshot {
  std::vector<StageSnapshot> stages;
  LatencyHistogram end_to_end;
  std::uint64_t emitted = 0;
  std::uint64_t fresh = 0;
  std::uint64_t stale = 0;
  std::uint64_t starved = 0;
  std::vector<StageFailure> failures;
  double elapsed_us = 0.0;

  double output_fps() const { return elapsed_us > 0 ? static_cast<double>(fresh) * 1e6 / elapsed_us : 0.0; }

  bool counters_consistent() const {
    for (const auto& s : stages)
      if (s.frames_out + s.drops > s.frames_in) return false;
    return true;
  }
};

inline nlohmann::json histogram_json(const LatencyHistogram& h) {
  return {{"count", h.count()},
          {"mean_us", h.mean()},
          {"p50_us", h.quantile(0.50)},
          {"p99_us", h.quantile(0.99)},
          {"max_us", h.max()}};
}

inline nlohmann::json to_json(const MetricsSnapshot& m) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : m.stages) {
    stages.push_back({{"name", s.name},
                      {"state", s.state},
                      {"frames_in", s.frames_in},
                      {"frames_out", s.frames_out},
                      {"drops", s.drops},
                      {"errors", s.errors},
                      {"latency", histogram_json(s.latency)}});
  }
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : m.failures) failures.push_back({{"stage", f.stage}, {"reason", f.reason}, {"at_us", f.at_us}});
  return {{"stages", stages},
          {"end_to_end", histogram_json(m.end_to_end)},
          {"sink", {{"emitted", m.emitted}, {"fresh", m.fresh}, {"stale", m.stale}, {"starved", m.starved}}},
          {"elapsed_s", m.elapsed_us / 1e6},
          {"output_fps", m.output_fps()},
          {"failures", failures}};
}

}  // namespace posebridge
