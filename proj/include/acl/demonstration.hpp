#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "acl/env.hpp"

namespace acl {

using Episode = std::vector<Transition>;

enum class DemoSource { Oracle, Pool, Human };

inline std::string_view to_string(DemoSource s) {
  switch (s) {
    case DemoSource::Oracle: return "oracle";
    case DemoSource::Pool: return "pool";
    case DemoSource::Human: return "human";
  }
  return "?";
}

inline DemoSource parse_demo_source(std::string_view s) {
  if (s == "oracle") return DemoSource::Oracle;
  if (s == "pool") return DemoSource::Pool;
  if (s == "human") return DemoSource::Human;
  throw ValidationError("unknown demo source: " + std::string(s));
}

struct Demonstration {
  Episode transitions;
  EnvState start_state;
  bool success = false;
  DemoSource source = DemoSource::Oracle;

  std::size_t length() const { return transitions.size(); }

  /// State sequence s_0, s_1, ..., s_T.
  std::vector<EnvState> states() const {
    std::vector<EnvState> out;
    out.reserve(transitions.size() + 1);
    out.push_back(start_state);
    for (const auto& t : transitions) out.push_back(t.s_next);
    return out;
  }

  friend bool operator==(const Demonstration&, const Demonstration&) = default;
};

inline bool ends_in_goal(const Episode& e) { return !e.empty() && e.back().cause == TerminalCause::Goal; }

/// Consecutive transitions share states: s_next of step t equals s of step t + 1.
inline bool chains_consistently(const Demonstration& d) {
  if (d.transitions.empty()) return true;
  if (!(d.transitions.front().s == d.start_state)) return false;
  for (std::size_t i = 1; i < d.transitions.size(); ++i) {
    if (!(d.transitions[i - 1].s_next == d.transitions[i].s)) return false;
  }
  return true;
}

/// Replays the demonstration's actions from its start state through Env::step and
/// checks the transitions are reproduced exactly.
inline bool replays_exactly(const TaskSpec& spec, const Demonstration& d) {
  Env env(spec);
  env.reset_to_state(d.start_state);
  for (const auto& t : d.transitions) {
    if (env.done()) return false;
    if (!(env.step(t.a) == t)) return false;
  }
  return true;
}

}  // namespace acl
