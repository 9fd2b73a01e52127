// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string_view>

#include "posebridge/error.hpp"
#include "posebridge/skeleton.hpp"

namespace posebridge {

enum class StaleStatus { Fresh, Stale, Starved };

constexpr std::string_view to_string(StaleStatus s) noexcept {
  switch (s) {
    case StaleStatus::Fresh: return "fresh";
    case StaleStatus::Stale: return "stale";
    case StaleStatus::Starved: return "starved";
  }
  return "?";
}

/// Reuse the last good result for up to hold_ms, flagging it stale once it is
/// older than fresh_ms; past hold_ms fall back to the neutral pose.
struct StalePolicy {
  double fresh_ms = 100.0;
  double hold_ms = 1000.0;
  JointConfiguration neutral;

  void validate() const {
    if (!(fresh_ms > 0.0 && fresh_ms <= hold_ms))
      throw Error(ErrorCode::ConfigError, "stale policy needs 0 < fresh_ms <= hold_ms");
  }
};

constexpr StaleStatus classify_age(bool have_last_good, double age_ms, double fresh_ms, double hold_ms) noexcept {
  if (!have_last_good || age_ms > hold_ms) return StaleStatus::Starved;
  if (age_ms > fresh_ms) return StaleStatus::Stale;
  return StaleStatus::Fresh;
}

struct StaleDecision {
  JointConfiguration output;
  StaleStatus status = StaleStatus::Fresh;
};

inline StaleDecision apply_stale_policy(const std::optional<JointConfiguration>& last_good, double age_ms,
                                        const StalePolicy& policy) {
  const StaleStatus status = classify_age(last_good.has_value(), age_ms, policy.fresh_ms, policy.hold_ms);
  switch (status) {
    case StaleStatus::Fresh: {
      StaleDecision d{*last_good, status};
      d.output.stale_flag = false;
      return d;
    }
    case StaleStatus::Stale: {
      StaleDecision d{*last_good, status};
      d.output.stale_flag = true;
      return d;
    }
    case StaleStatus::Starved:
      break;
  }
  StaleDecision d{policy.neutral, StaleStatus::Starved};
  d.output.stale_flag = true;
  return d;
}

}  // namespace posebridge
