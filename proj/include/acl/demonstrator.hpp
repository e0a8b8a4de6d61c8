#pragma once

#include <chrono>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <vector>

#include "acl/demonstration.hpp"
#include "acl/error.hpp"
#include "acl/oracle.hpp"

namespace acl {

/// Bookkeeping for one demonstration request (the query protocol record).
struct QueryRecord {
  EnvState requested_start;
  int query_index = 0;
  int attempts = 0;
  double duration_ms = 0.0;
  bool success = false;
};

/// Source of demonstrations. `demonstrate` makes one attempt from `start`; the
/// returned demonstration may be unsuccessful.
class Demonstrator {
 public:
  virtual ~Demonstrator() = default;
  virtual Demonstration demonstrate(const EnvState& start, int query_index, Rng& rng) = 0;
  virtual DemoSource source() const = 0;
  /// Attempts the demonstrator made internally for its last demonstration (remote humans retry in place).
  virtual int last_attempts() const { return 1; }
  virtual bool measures_time() const { return false; }
};

class OracleDemonstrator final : public Demonstrator {
 public:
  OracleDemonstrator(const TaskSpec& spec, OracleConfig config = {}) : planner_(spec, config), config_(config) {}

  Demonstration demonstrate(const EnvState& start, int, Rng& rng) override {
    return oracle_demonstrate(planner_, start, rng, config_);
  }
  DemoSource source() const override { return DemoSource::Oracle; }

 private:
  OraclePlanner planner_;
  OracleConfig config_;
};

/// Pool demonstrations answering queries by nearest initial state.
inline std::size_t pool_closest_initial_index(const std::vector<Demonstration>& pool, const TaskSpec& spec,
                                              const EnvState& requested) {
  if (pool.empty()) throw DemonstrationError("demonstration pool is empty");
  const Vec2 q = task_point(spec, requested);
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const double d = distance(task_point(spec, pool[i].start_state), q);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

inline Demonstration pool_closest_initial(const std::vector<Demonstration>& pool, const TaskSpec& spec,
                                          const EnvState& requested) {
  Demonstration d = pool[pool_closest_initial_index(pool, spec, requested)];
  d.source = DemoSource::Pool;
  return d;
}

struct PoolLocation {
  std::size_t demo = 0;
  std::size_t step = 0;
};

/// Globally closest pre-step state over every demonstration; ties go to the lowest (demo, step).
inline PoolLocation pool_closest_state_location(const std::vector<Demonstration>& pool, const TaskSpec& spec,
                                                const EnvState& requested) {
  if (pool.empty()) throw DemonstrationError("demonstration pool is empty");
  const Vec2 q = task_point(spec, requested);
  PoolLocation best;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& tr = pool[i].transitions;
    for (std::size_t k = 0; k < tr.size(); ++k) {
      const double d = distance(task_point(spec, tr[k].s), q);
      if (d < best_d) {
        best_d = d;
        best = {i, k};
      }
    }
  }
  if (!std::isfinite(best_d)) throw DemonstrationError("demonstration pool has no states");
  return best;
}

/// Suffix of the demonstration holding the closest state, starting at that state.
inline Demonstration pool_closest_state_suffix(const std::vector<Demonstration>& pool, const TaskSpec& spec,
                                               const EnvState& requested) {
  const auto loc = pool_closest_state_location(pool, spec, requested);
  const auto& src = pool[loc.demo];
  Demonstration d;
  d.transitions.assign(src.transitions.begin() + static_cast<std::ptrdiff_t>(loc.step), src.transitions.end());
  d.start_state = d.transitions.front().s;
  d.success = ends_in_goal(d.transitions);
  d.source = DemoSource::Pool;
  return d;
}

enum class PoolMatch { ClosestInitial, ClosestStateSuffix };

class PoolDemonstrator final : public Demonstrator {
 public:
  PoolDemonstrator(TaskSpec spec, std::vector<Demonstration> pool, PoolMatch match)
      : spec_(std::move(spec)), pool_(std::move(pool)), match_(match) {}

  Demonstration demonstrate(const EnvState& start, int, Rng&) override {
    return match_ == PoolMatch::ClosestInitial ? pool_closest_initial(pool_, spec_, start)
                                               : pool_closest_state_suffix(pool_, spec_, start);
  }
  DemoSource source() const override { return DemoSource::Pool; }
  const std::vector<Demonstration>& pool() const { return pool_; }

 private:
  TaskSpec spec_;
  std::vector<Demonstration> pool_;
  PoolMatch match_;
};

/// Repeats requests until a successful demonstration arrives. Failed attempts are
/// counted in the returned record; after `max_attempts` failures a DemonstrationError is thrown.
inline Demonstration request_successful_demo(Demonstrator& dem, const EnvState& start, int query_index, Rng& rng,
                                             QueryRecord* record = nullptr, int max_attempts = 50) {
  const auto t0 = std::chrono::steady_clock::now();
  QueryRecord rec;
  rec.requested_start = start;
  rec.query_index = query_index;
  for (int i = 0; i < max_attempts; ++i) {
    Demonstration d = dem.demonstrate(start, query_index, rng);
    rec.attempts += dem.last_attempts();
    if (d.success && ends_in_goal(d.transitions)) {
      rec.success = true;
      if (dem.measures_time()) {
        rec.duration_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      }
      if (record) *record = rec;
      return d;
    }
  }
  if (record) *record = rec;
  throw DemonstrationError("no successful demonstration after " + std::to_string(max_attempts) + " attempts");
}

/// 60-episode style pool: starts uniform on the start line, each solved by the oracle.
inline std::vector<Demonstration> generate_pool(const TaskSpec& spec, std::size_t count, Rng& rng,
                                                const OracleConfig& config = {}) {
  OracleDemonstrator oracle(spec, config);
  std::vector<Demonstration> pool;
  pool.reserve(count);
  while (pool.size() < count) {
    const EnvState start = sample_initial(spec, rng);
    pool.push_back(request_successful_demo(oracle, start, static_cast<int>(pool.size()), rng));
  }
  return pool;
}

}  // namespace acl
