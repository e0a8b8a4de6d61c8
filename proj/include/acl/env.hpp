#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <spdlog/spdlog.h>

#include "acl/error.hpp"
#include "acl/geometry.hpp"

namespace acl {

using Rng = std::mt19937_64;

enum class TaskId { ReachV0, ReachV1, PushV0, PushV1 };

inline std::string_view to_string(TaskId id) {
  switch (id) {
    case TaskId::ReachV0: return "ReachV0";
    case TaskId::ReachV1: return "ReachV1";
    case TaskId::PushV0: return "PushV0";
    case TaskId::PushV1: return "PushV1";
  }
  return "?";
}

inline TaskId parse_task_id(std::string_view s) {
  if (s == "ReachV0" || s == "ReachWithObstacleV0") return TaskId::ReachV0;
  if (s == "ReachV1" || s == "ReachWithObstacleV1") return TaskId::ReachV1;
  if (s == "PushV0" || s == "PushWithObstacleV0") return TaskId::PushV0;
  if (s == "PushV1" || s == "PushWithObstacleV1") return TaskId::PushV1;
  throw ValidationError("unknown task id: " + std::string(s));
}

inline bool is_push(TaskId id) { return id == TaskId::PushV0 || id == TaskId::PushV1; }

enum class TerminalCause { None, Goal, Obstacle, Timeout };

inline std::string_view to_string(TerminalCause c) {
  switch (c) {
    case TerminalCause::None: return "none";
    case TerminalCause::Goal: return "goal";
    case TerminalCause::Obstacle: return "obstacle";
    case TerminalCause::Timeout: return "timeout";
  }
  return "?";
}

inline TerminalCause parse_terminal_cause(std::string_view s) {
  if (s == "none") return TerminalCause::None;
  if (s == "goal") return TerminalCause::Goal;
  if (s == "obstacle") return TerminalCause::Obstacle;
  if (s == "timeout") return TerminalCause::Timeout;
  throw ValidationError("unknown terminal cause: " + std::string(s));
}

inline constexpr double kGoalReward = 1000.0;
inline constexpr double kObstacleReward = -1000.0;
inline constexpr double kStepReward = -1.0;

/// Full resettable world state. `cube` is present exactly for Push tasks.
struct EnvState {
  Vec2 gripper;
  std::optional<Vec2> cube;

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

/// Displacement command; each component in [-1, 1], scaled by max_step.
struct Action {
  Vec2 delta;

  friend bool operator==(const Action&, const Action&) = default;
};

struct TaskSpec {
  TaskId task_id = TaskId::ReachV0;
  Rect workspace{{-0.25, -0.20}, {0.25, 0.25}};
  Vec2 goal{0.0, 0.15};
  double goal_radius = 0.03;
  std::vector<Rect> obstacles;
  Segment start_line{{-0.15, -0.12}, {0.15, -0.12}};
  Vec2 neutral_pose{0.0, -0.18};
  int max_episode_len = 120;
  double cube_side = 0.04;
  double max_step = 0.02;
  double gripper_radius = 0.01;

  bool is_push() const { return acl::is_push(task_id); }
  double cube_half() const { return 0.5 * cube_side; }
  /// Region the cube center may occupy: inset by one cube side plus the gripper
  /// radius so the gripper always fits between the cube and the workspace edge.
  Rect cube_bounds() const { return workspace.inflated(-(cube_side + gripper_radius)); }
};

struct Transition {
  EnvState s;
  Action a;
  double r = kStepReward;
  EnvState s_next;
  bool terminal = false;
  TerminalCause cause = TerminalCause::None;

  friend bool operator==(const Transition&, const Transition&) = default;
};

namespace tasks {

inline Rect wall() { return {{-0.10, 0.05}, {0.10, 0.08}}; }
inline Rect column() { return {{0.10, -0.05}, {0.14, 0.01}}; }

}  // namespace tasks

/// Reference geometry for the four planar tasks (see docs/geometry.md).
inline TaskSpec make_task(TaskId id) {
  TaskSpec spec;
  spec.task_id = id;
  spec.obstacles = {tasks::wall()};
  if (id == TaskId::ReachV1 || id == TaskId::PushV1) spec.obstacles.push_back(tasks::column());
  spec.goal_radius = is_push(id) ? 0.04 : 0.03;
  return spec;
}

inline void validate(const TaskSpec& spec) {
  auto fail = [](const std::string& m) { throw ValidationError("invalid TaskSpec: " + m); };
  if (std::abs(spec.start_line.length() - 0.3) > 1e-12) fail("start line length must be 0.3");
  if (spec.max_episode_len != 120) fail("max_episode_len must be 120");
  if (spec.max_step <= 0.0 || spec.gripper_radius <= 0.0 || spec.cube_side <= 0.0) fail("non-positive size");
  if (spec.goal_radius <= 0.0) fail("goal radius must be positive");
  if (!spec.workspace.contains(spec.goal)) fail("goal outside workspace");
  for (const auto& o : spec.obstacles) {
    if (distance_to_rect(o, spec.goal) <= spec.goal_radius) fail("obstacle overlaps goal region");
  }
}

/// Coordinate the curricula vary: cube for Push, gripper for Reach.
inline Vec2 task_point(const TaskSpec& spec, const EnvState& s) {
  return spec.is_push() ? *s.cube : s.gripper;
}

inline EnvState with_task_point(const TaskSpec& spec, EnvState s, Vec2 p) {
  if (spec.is_push()) {
    s.cube = p;
  } else {
    s.gripper = p;
  }
  return s;
}

/// Reason a state is invalid for `spec`, or nullopt if it is valid.
inline std::optional<std::string> state_violation(const TaskSpec& spec, const EnvState& s) {
  if (!is_finite(s.gripper)) return "gripper not finite";
  if (!spec.workspace.contains(s.gripper)) return "gripper outside workspace";
  for (const auto& o : spec.obstacles) {
    if (o.inflated(spec.gripper_radius).strictly_contains(s.gripper)) return "gripper penetrates obstacle";
  }
  if (spec.is_push() != s.cube.has_value()) return "cube presence does not match task";
  if (s.cube) {
    const Vec2 c = *s.cube;
    if (!is_finite(c)) return "cube not finite";
    if (!spec.cube_bounds().contains(c)) return "cube outside workspace";
    for (const auto& o : spec.obstacles) {
      if (o.inflated(spec.cube_half()).strictly_contains(c)) return "cube penetrates obstacle";
    }
    const Rect sq = square_at(c, spec.cube_side);
    if (sq.strictly_contains(s.gripper) || distance_to_rect(sq, s.gripper) < spec.gripper_radius - 1e-9) {
      return "gripper penetrates cube";
    }
  }
  return std::nullopt;
}

inline bool is_valid_state(const TaskSpec& spec, const EnvState& s) { return !state_violation(spec, s); }

inline void require_valid_state(const TaskSpec& spec, const EnvState& s) {
  if (auto v = state_violation(spec, s)) throw ValidationError("invalid state: " + *v);
}

inline bool in_goal(const TaskSpec& spec, const EnvState& s) {
  return distance(task_point(spec, s), spec.goal) <= spec.goal_radius;
}

inline int observation_size(const TaskSpec& spec) { return spec.is_push() ? 4 : 2; }

/// Flat observation: gripper xy, then cube xy for Push tasks.
inline void observe_into(const EnvState& s, std::span<double> out) {
  out[0] = s.gripper.x;
  out[1] = s.gripper.y;
  if (s.cube) {
    out[2] = s.cube->x;
    out[3] = s.cube->y;
  }
}

inline Action clip_action(Action a) {
  return {{std::clamp(a.delta.x, -1.0, 1.0), std::clamp(a.delta.y, -1.0, 1.0)}};
}

/// One step of planar kinematics without the episode-length cap.
inline Transition simulate(const TaskSpec& spec, const EnvState& s, Action a) {
  Transition t;
  t.s = s;
  t.a = clip_action(a);
  if (!(t.a == a)) {
    spdlog::debug("action ({}, {}) clipped", a.delta.x, a.delta.y);
    if (!is_finite(a.delta)) t.a = Action{};
  }
  t.s_next = s;

  const Vec2 target = spec.workspace.clamp(s.gripper + spec.max_step * t.a.delta);
  if (s.cube) {
    const Vec2 push = disc_square_push(target, spec.gripper_radius, square_at(*s.cube, spec.cube_side));
    const Vec2 moved = *s.cube + push;
    // Cube pinned against the workspace edge: the move is blocked.
    if (!spec.cube_bounds().contains(moved)) return t;
    t.s_next.cube = moved;
  }
  t.s_next.gripper = target;

  auto hit = [&](Vec2 from, Vec2 to, double inflate) {
    for (const auto& o : spec.obstacles) {
      if (segment_hits_open_rect(from, to, o.inflated(inflate))) return true;
    }
    return false;
  };
  if (hit(s.gripper, target, spec.gripper_radius) || (s.cube && hit(*s.cube, *t.s_next.cube, spec.cube_half()))) {
    t.r = kObstacleReward;
    t.terminal = true;
    t.cause = TerminalCause::Obstacle;
    return t;
  }

  if (in_goal(spec, t.s_next)) {
    t.r = kGoalReward;
    t.terminal = true;
    t.cause = TerminalCause::Goal;
  }
  return t;
}

/// Initial state from the task's own distribution: a uniform point on the start line.
inline EnvState sample_initial(const TaskSpec& spec, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec2 p = spec.start_line.lerp(u(rng));
  if (spec.is_push()) return EnvState{spec.neutral_pose, p};
  return EnvState{p, std::nullopt};
}

/// Uniform sample from the disc of `radius` around the center's task point.
/// For Push the gripper is translated together with the cube.
inline EnvState sample_curriculum_initial(const TaskSpec& spec, const EnvState& center, double radius, Rng& rng) {
  require_valid_state(spec, center);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double rho = radius * std::sqrt(u(rng));
    const double theta = 2.0 * std::numbers::pi * u(rng);
    const Vec2 offset{rho * std::cos(theta), rho * std::sin(theta)};
    EnvState s = center;
    s.gripper = center.gripper + offset;
    if (s.cube) s.cube = *center.cube + offset;
    if (radius == 0.0) s = center;
    if (is_valid_state(spec, s)) return s;
  }
  throw ValidationError("no valid curriculum initial state after 1000 rejections");
}

/// Uniform sample on the feasible part of the circle around the goal whose radius is
/// the anchor's goal distance. Non-task coordinates take the task defaults.
inline EnvState sample_equidistant_initial(const TaskSpec& spec, const EnvState& anchor, Rng& rng) {
  const double d = distance(task_point(spec, anchor), spec.goal);
  EnvState base = anchor;
  if (spec.is_push()) base.gripper = spec.neutral_pose;
  if (d == 0.0) {
    EnvState s = with_task_point(spec, base, spec.goal);
    if (is_valid_state(spec, s)) return s;
    spdlog::warn("equidistant sample: goal point infeasible, falling back to anchor");
    return anchor;
  }
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double theta = u(rng);
    EnvState s = with_task_point(spec, base, spec.goal + Vec2{d * std::cos(theta), d * std::sin(theta)});
    if (is_valid_state(spec, s)) return s;
  }
  spdlog::warn("equidistant sample: empty feasible arc at radius {}, falling back to anchor", d);
  return anchor;
}

/// Resettable environment tracking the step counter and the episode cap.
class Env {
 public:
  explicit Env(TaskSpec spec) : spec_(std::move(spec)) {
    validate(spec_);
    state_ = sample_initial_default();
  }

  const TaskSpec& spec() const { return spec_; }
  const EnvState& observe() const { return state_; }
  int steps() const { return steps_; }
  bool done() const { return done_; }

  const EnvState& reset(Rng& rng) { return reset_to_state(sample_initial(spec_, rng)); }

  const EnvState& reset_to_state(const EnvState& s) {
    require_valid_state(spec_, s);
    state_ = s;
    steps_ = 0;
    done_ = false;
    return state_;
  }

  Transition step(Action a) {
    if (done_) throw Error("step called on a finished episode; reset first");
    Transition t = simulate(spec_, state_, a);
    ++steps_;
    if (!t.terminal && steps_ >= spec_.max_episode_len) {
      t.terminal = true;
      t.cause = TerminalCause::Timeout;
    }
    state_ = t.s_next;
    done_ = t.terminal;
    return t;
  }

 private:
  EnvState sample_initial_default() const {
    const Vec2 p = spec_.start_line.a;
    return spec_.is_push() ? EnvState{spec_.neutral_pose, p} : EnvState{p, std::nullopt};
  }

  TaskSpec spec_;
  EnvState state_;
  int steps_ = 0;
  bool done_ = false;
};

}  // namespace acl
