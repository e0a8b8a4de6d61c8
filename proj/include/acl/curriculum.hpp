#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "acl/buffers.hpp"
#include "acl/demonstrator.hpp"
#include "acl/env.hpp"
#include "acl/error.hpp"
#include "acl/json.hpp"

namespace acl {

enum class CurriculumOrigin { BaseDemo, Queried };

inline std::string_view to_string(CurriculumOrigin o) { return o == CurriculumOrigin::BaseDemo ? "base" : "query"; }

/// One candidate initial-state distribution: a disc around `center`.
struct Curriculum {
  int id = 0;
  EnvState center;
  double radius = 0.03;
  CurriculumOrigin origin = CurriculumOrigin::BaseDemo;
  /// Base-demo state index for BaseDemo, query index for Queried.
  int origin_index = 0;
  std::optional<double> last_q;
  std::optional<int> last_score;
};

using CurriculumList = std::vector<Curriculum>;

struct ScheduleConfig {
  int n_eval = 10;
  int n_train = 20;
  int n_q = 40;
  int n_d = 10;
  int delta_g = 10;
  double w = 0.7;
  double radius = 0.03;
  int max_demo_attempts = 50;

  void validate() const {
    if (n_eval < 1) throw ValidationError("n_eval must be >= 1");
    if (n_train < 1) throw ValidationError("n_train must be >= 1");
    if (n_q < n_train || n_q % n_train != 0) throw ValidationError("n_q must be a positive multiple of n_train");
    if (n_d < 0) throw ValidationError("n_d must be >= 0");
    if (delta_g < 1) throw ValidationError("delta_g must be >= 1");
    if (!(w > 0.0 && w <= 1.0)) throw ValidationError("w must be in (0, 1]");
    if (!(radius >= 0.0)) throw ValidationError("curriculum radius must be >= 0");
    if (max_demo_attempts < 1) throw ValidationError("max_demo_attempts must be >= 1");
  }
};

struct ScheduleState {
  int g = 1;
  int g_tilde = 1;
  int t_b = 0;
  int n_d = 0;
  int iteration = 0;
  std::int64_t train_episodes = 0;
  int next_id = 0;
};

/// 2 for q = 0, 3 for 0 < q < w, 1 for q >= w.
inline int reachability_score(double q, double w) {
  if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("success rate outside [0, 1]");
  if (!(w > 0.0 && w <= 1.0)) throw ValidationError("score threshold outside (0, 1]");
  if (q >= w) return 1;
  if (q == 0.0) return 2;
  return 3;
}

/// Index of a highest-scoring candidate, uniform among ties.
inline std::size_t select_curriculum(const CurriculumList& list, Rng& rng) {
  if (list.empty()) throw ValidationError("select_curriculum: empty candidate list");
  int best = 0;
  for (const auto& c : list) {
    if (!c.last_score) throw ValidationError("select_curriculum: unscored candidate");
    best = std::max(best, *c.last_score);
  }
  std::vector<std::size_t> ties;
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (*list[i].last_score == best) ties.push_back(i);
  }
  if (ties.size() == 1) return ties.front();
  std::uniform_int_distribution<std::size_t> pick(0, ties.size() - 1);
  return ties[pick(rng)];
}

/// Base-demo state at index T_b - g. Index k is the post-step state s_{k+1}, except
/// that g = T_b > 1 maps to the initial state s_0.
inline EnvState base_state_at(const Demonstration& base, int g) {
  const int t_b = static_cast<int>(base.length());
  if (t_b < 1) throw ValidationError("base demonstration is empty");
  if (g < 1 || g > t_b) throw ValidationError("stage outside [1, T_b]");
  if (g == t_b && t_b > 1) return base.start_state;
  return base.transitions[static_cast<std::size_t>(t_b - g)].s_next;
}

inline bool same_center(const EnvState& a, const EnvState& b, double tol = 1e-12) {
  auto close = [&](Vec2 p, Vec2 q) { return std::abs(p.x - q.x) <= tol && std::abs(p.y - q.y) <= tol; };
  if (a.cube.has_value() != b.cube.has_value()) return false;
  return close(a.gripper, b.gripper) && (!a.cube || close(*a.cube, *b.cube));
}

enum class RolloutKind { Evaluation, Training };

struct RolloutResult {
  bool success = false;
  int steps = 0;
};

/// What the scheduler needs from a learner: evaluation rollouts (deterministic mean,
/// transitions kept), training rollouts (stochastic, followed by as many updates as
/// steps), demonstrations, and a budget signal.
template <class L>
concept CurriculumLearner = requires(L& l, const L& cl, const EnvState& s, RolloutKind k, Rng& rng,
                                     const Demonstration& d) {
  { l.rollout(s, k, rng) } -> std::same_as<RolloutResult>;
  l.add_demonstration(d);
  { cl.exhausted() } -> std::convertible_to<bool>;
};

using EventSink = std::function<void(const json&)>;

inline json curriculum_ids(const CurriculumList& list) {
  json ids = json::array();
  for (const auto& c : list) ids.push_back(c.id);
  return ids;
}

template <CurriculumLearner L>
class CurriculumScheduler {
 public:
  CurriculumScheduler(TaskSpec spec, ScheduleConfig config, L& learner, Demonstrator& demonstrator,
                      EventSink sink = {})
      : spec_(std::move(spec)), config_(config), learner_(learner), demonstrator_(demonstrator),
        sink_(std::move(sink)) {
    validate(spec_);
    config_.validate();
  }

  /// Base demonstration from the task's own initial distribution.
  void bootstrap(Rng& rng) {
    QueryRecord rec;
    Demonstration base =
        request_successful_demo(demonstrator_, sample_initial(spec_, rng), 0, rng, &rec, config_.max_demo_attempts);
    bootstrap_with(std::move(base), rec);
  }

  void bootstrap_with(Demonstration base, const QueryRecord& rec = {}) {
    if (bootstrapped_) throw Error("scheduler already bootstrapped");
    if (!base.success || base.transitions.empty()) throw ValidationError("base demonstration must be successful");
    base_ = std::move(base);
    learner_.add_demonstration(base_);
    ++demos_collected_;
    state_.t_b = static_cast<int>(base_.length());
    state_.g = 1;
    state_.g_tilde = 1;
    emit({{"event", "bootstrap"},
          {"t_b", state_.t_b},
          {"start", to_json(base_.start_state)},
          {"attempts", rec.attempts},
          {"duration_ms", rec.duration_ms}});
    add_base_curriculum();
    bootstrapped_ = true;
  }

  /// One iteration of the schedule. Returns false when the learner's budget ran out
  /// part-way through.
  bool iterate(Rng& rng) {
    if (!bootstrapped_) throw Error("scheduler not bootstrapped");
    ++state_.iteration;
    const bool done = list_.empty() ? fallback(rng) : curriculum_step(rng);
    emit({{"event", "iteration"},
          {"iteration", state_.iteration},
          {"C", curriculum_ids(list_)},
          {"g", state_.g},
          {"g_tilde", state_.g_tilde},
          {"n_d", state_.n_d},
          {"train_episodes", state_.train_episodes}});
    return done;
  }

  const CurriculumList& list() const { return list_; }
  const ScheduleState& state() const { return state_; }
  const ScheduleConfig& config() const { return config_; }
  const Demonstration& base_demo() const { return base_; }
  int demos_collected() const { return demos_collected_; }
  const std::vector<QueryRecord>& queries() const { return queries_; }

 private:
  void emit(json e) {
    if (sink_) sink_(e);
  }

  Curriculum& append(EnvState center, CurriculumOrigin origin, int origin_index) {
    Curriculum c;
    c.id = state_.next_id++;
    c.center = std::move(center);
    c.radius = config_.radius;
    c.origin = origin;
    c.origin_index = origin_index;
    list_.push_back(c);
    emit({{"event", "add"},
          {"iteration", state_.iteration},
          {"id", c.id},
          {"origin", to_string(origin)},
          {"index", origin_index},
          {"center", to_json(c.center)}});
    return list_.back();
  }

  void add_base_curriculum() {
    append(base_state_at(base_, state_.g), CurriculumOrigin::BaseDemo, state_.t_b - state_.g);
  }

  bool fallback(Rng& rng) {
    emit({{"event", "fallback"}, {"iteration", state_.iteration}});
    for (int i = 0; i < config_.n_train; ++i) {
      if (learner_.exhausted()) return false;
      learner_.rollout(sample_initial(spec_, rng), RolloutKind::Training, rng);
    }
    return true;
  }

  /// Success rate over N_eval deterministic rollouts; nullopt if the budget ran out.
  std::optional<double> success_rate(const Curriculum& c, Rng& rng) {
    int wins = 0;
    for (int i = 0; i < config_.n_eval; ++i) {
      if (learner_.exhausted()) return std::nullopt;
      if (learner_.rollout(sample_curriculum_initial(spec_, c.center, c.radius, rng), RolloutKind::Evaluation, rng)
              .success) {
        ++wins;
      }
    }
    return static_cast<double>(wins) / config_.n_eval;
  }

  bool curriculum_step(Rng& rng) {
    for (auto& c : list_) {
      const auto q = success_rate(c, rng);
      if (!q) return false;
      c.last_q = *q;
      c.last_score = reachability_score(*q, config_.w);
      emit({{"event", "evaluate"},
            {"iteration", state_.iteration},
            {"id", c.id},
            {"q", *q},
            {"score", *c.last_score}});
    }
    const std::size_t pick = select_curriculum(list_, rng);
    const Curriculum chosen = list_[pick];
    emit({{"event", "select"}, {"iteration", state_.iteration}, {"id", chosen.id}});

    const std::int64_t before = state_.train_episodes;
    for (int i = 0; i < config_.n_train; ++i) {
      if (learner_.exhausted()) return false;
      learner_.rollout(sample_curriculum_initial(spec_, chosen.center, chosen.radius, rng), RolloutKind::Training,
                       rng);
      ++state_.train_episodes;
    }

    const auto q_post = success_rate(chosen, rng);
    if (!q_post) return false;
    const bool mastered = *q_post >= config_.w;
    if (mastered) list_.erase(list_.begin() + static_cast<std::ptrdiff_t>(pick));
    emit({{"event", "post_update"},
          {"iteration", state_.iteration},
          {"id", chosen.id},
          {"q_post", *q_post},
          {"removed", mastered}});

    if (chosen.origin == CurriculumOrigin::BaseDemo && state_.g < state_.t_b) {
      state_.g = std::min(state_.g + config_.delta_g, state_.t_b);
      emit({{"event", "stage"}, {"iteration", state_.iteration}, {"g", state_.g}});
      add_base_curriculum();
    }

    if (state_.train_episodes / config_.n_q > before / config_.n_q && state_.n_d < config_.n_d) query(rng);
    return true;
  }

  EnvState query_start(const EnvState& anchor, Rng& rng) const {
    auto taken = [&](const EnvState& s) {
      return std::any_of(list_.begin(), list_.end(), [&](const Curriculum& c) { return same_center(c.center, s); });
    };
    EnvState s = sample_equidistant_initial(spec_, anchor, rng);
    if (!taken(s)) return s;
    s = sample_equidistant_initial(spec_, anchor, rng);
    if (!taken(s)) return s;
    // Rotate along the arc so the goal distance is preserved.
    const Vec2 rel = task_point(spec_, s) - spec_.goal;
    const double d = norm(rel);
    if (d == 0.0) return s;
    for (double sign : {1.0, -1.0}) {
      const double th = sign * 1e-6 / d;
      const Vec2 p = spec_.goal + Vec2{rel.x * std::cos(th) - rel.y * std::sin(th),
                                       rel.x * std::sin(th) + rel.y * std::cos(th)};
      EnvState j = with_task_point(spec_, s, p);
      if (is_valid_state(spec_, j)) return j;
    }
    return s;
  }

  void query(Rng& rng) {
    const int anchor_index = state_.t_b - state_.g_tilde;
    const EnvState anchor = base_state_at(base_, state_.g_tilde);
    const EnvState start = query_start(anchor, rng);
    const int query_index = state_.n_d + 1;
    QueryRecord rec;
    const Demonstration demo =
        request_successful_demo(demonstrator_, start, query_index, rng, &rec, config_.max_demo_attempts);
    learner_.add_demonstration(demo);
    ++demos_collected_;
    ++state_.n_d;
    queries_.push_back(rec);
    emit({{"event", "query"},
          {"iteration", state_.iteration},
          {"query_index", query_index},
          {"g_tilde", state_.g_tilde},
          {"anchor_index", anchor_index},
          {"anchor", to_json(anchor)},
          {"start", to_json(start)},
          {"anchor_goal_distance", distance(task_point(spec_, anchor), spec_.goal)},
          {"start_goal_distance", distance(task_point(spec_, start), spec_.goal)},
          {"demo_length", demo.length()},
          {"attempts", rec.attempts},
          {"duration_ms", rec.duration_ms}});
    append(start, CurriculumOrigin::Queried, query_index);
    state_.g_tilde = std::min(state_.g_tilde + config_.delta_g, state_.t_b);
  }

  TaskSpec spec_;
  ScheduleConfig config_;
  L& learner_;
  Demonstrator& demonstrator_;
  EventSink sink_;
  Demonstration base_;
  CurriculumList list_;
  ScheduleState state_;
  std::vector<QueryRecord> queries_;
  int demos_collected_ = 0;
  bool bootstrapped_ = false;
};

}  // namespace acl
