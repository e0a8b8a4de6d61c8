#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <random>
#include <vector>

#include "acl/demonstration.hpp"
#include "acl/env.hpp"

namespace acl {

struct OracleConfig {
  double noise_std = 0.05;
  bool noise = true;
  // Clearance kept from obstacles by the navigation graph.
  double margin = 0.012;
};

namespace oracle_detail {

inline Action toward(Vec2 from, Vec2 to, double max_step) {
  const Vec2 d = (to - from) / max_step;
  const double m = std::max(std::abs(d.x), std::abs(d.y));
  if (m <= 1.0) return {d};
  return {d / m};
}

/// Shortest collision-free polyline from `from` to `to` around `blocks` (already
/// inflated by the mover radius). Returns the first waypoint, or nullopt.
inline std::optional<Vec2> next_waypoint(Vec2 from, Vec2 to, const std::vector<Rect>& blocks, const Rect& bounds,
                                         double margin) {
  // Endpoints already inside a block's clearance zone are only held to the block itself.
  auto clear = [&](Vec2 a, Vec2 b, double shrink) {
    for (const auto& r : blocks) {
      const Rect z = r.inflated(margin - shrink);
      const bool inside = z.strictly_contains(a) || z.strictly_contains(b);
      if (segment_hits_open_rect(a, b, inside ? r.inflated(-1e-6) : z)) return false;
    }
    return true;
  };
  for (double shrink : {0.5 * margin, margin - 1e-7}) {
    if (clear(from, to, shrink)) return to;
    std::vector<Vec2> nodes{from, to};
    for (const auto& r : blocks) {
      const Rect c = r.inflated(margin);
      for (Vec2 p : {c.lo, c.hi, Vec2{c.lo.x, c.hi.y}, Vec2{c.hi.x, c.lo.y}}) {
        if (!bounds.contains(p)) continue;
        bool inside = false;
        for (const auto& o : blocks) inside = inside || o.inflated(margin - 1e-7).strictly_contains(p);
        if (!inside) nodes.push_back(p);
      }
    }
    const std::size_t n = nodes.size();
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> prev(n, n);
    std::vector<bool> done(n, false);
    dist[0] = 0.0;
    for (std::size_t it = 0; it < n; ++it) {
      std::size_t u = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (!done[i] && (u == n || dist[i] < dist[u])) u = i;
      }
      if (u == n || !std::isfinite(dist[u])) break;
      done[u] = true;
      if (u == 1) break;
      for (std::size_t v = 0; v < n; ++v) {
        if (done[v]) continue;
        const double nd = dist[u] + distance(nodes[u], nodes[v]);
        if (nd < dist[v] && clear(nodes[u], nodes[v], shrink)) {
          dist[v] = nd;
          prev[v] = u;
        }
      }
    }
    if (!std::isfinite(dist[1])) continue;
    std::size_t v = 1;
    while (prev[v] != 0) v = prev[v];
    return nodes[v];
  }
  return std::nullopt;
}

}  // namespace oracle_detail

/// Closed-loop scripted expert. Reach: visibility-graph navigation. Push: axis-aligned
/// cube path from a precomputed cost-to-go grid, executed with face pushes.
class OraclePlanner {
 public:
  explicit OraclePlanner(TaskSpec spec, OracleConfig config = {}) : spec_(std::move(spec)), config_(config) {
    for (const auto& o : spec_.obstacles) walls_.push_back(o.inflated(spec_.gripper_radius));
    if (spec_.is_push()) build_push_field();
  }

  const TaskSpec& spec() const { return spec_; }

  void reset_episode() { last_dir_ = -1; }

  /// Noise-free expert action for state `s`; nullopt when no plan exists.
  std::optional<Action> act(const EnvState& s) {
    if (!spec_.is_push()) return navigate(s.gripper, spec_.goal, walls_);
    return push_action(s);
  }

 private:
  static constexpr double kCell = 0.01;
  static constexpr double kTurnPenalty = 8.0;
  static constexpr double kCubeClearance = 0.008;
  static constexpr std::array<Vec2, 4> kDirs{Vec2{1, 0}, Vec2{-1, 0}, Vec2{0, 1}, Vec2{0, -1}};

  std::optional<Action> navigate(Vec2 from, Vec2 to, const std::vector<Rect>& blocks) const {
    auto wp = oracle_detail::next_waypoint(from, to, blocks, spec_.workspace, config_.margin);
    if (!wp) return std::nullopt;
    return oracle_detail::toward(from, *wp, spec_.max_step);
  }

  double staging_offset() const { return spec_.cube_half() + spec_.gripper_radius + 0.02; }

  bool gripper_ok(Vec2 p) const {
    if (!spec_.workspace.contains(p)) return false;
    for (const auto& w : walls_) {
      if (w.inflated(0.004).strictly_contains(p)) return false;
    }
    return true;
  }

  Vec2 cell_center(int ix, int iy) const { return {origin_.x + ix * kCell, origin_.y + iy * kCell}; }
  int index(int ix, int iy) const { return iy * nx_ + ix; }

  bool cube_cell_ok(int ix, int iy) const {
    if (ix < 0 || iy < 0 || ix >= nx_ || iy >= ny_) return false;
    const Vec2 c = cell_center(ix, iy);
    if (!spec_.cube_bounds().inflated(-kCubeClearance).contains(c)) return false;
    for (const auto& o : spec_.obstacles) {
      if (o.inflated(spec_.cube_half() + kCubeClearance).strictly_contains(c)) return false;
    }
    return true;
  }

  void build_push_field() {
    const Rect b = spec_.cube_bounds();
    origin_ = b.lo;
    nx_ = static_cast<int>(std::floor(b.size().x / kCell)) + 1;
    ny_ = static_cast<int>(std::floor(b.size().y / kCell)) + 1;
    const auto n_states = static_cast<std::size_t>(nx_ * ny_ * 4);
    value_.assign(n_states, std::numeric_limits<double>::infinity());
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    for (int iy = 0; iy < ny_; ++iy) {
      for (int ix = 0; ix < nx_; ++ix) {
        if (!cube_cell_ok(ix, iy)) continue;
        if (distance(cell_center(ix, iy), spec_.goal) > spec_.goal_radius - kCubeClearance) continue;
        for (int d = 0; d < 4; ++d) {
          const auto st = static_cast<std::size_t>(index(ix, iy) * 4 + d);
          value_[st] = 0.0;
          pq.push({0.0, st});
        }
      }
    }
    // value_[(c, d)]: cost to goal from cell c having arrived by a move in direction d.
    while (!pq.empty()) {
      auto [v, st] = pq.top();
      pq.pop();
      if (v > value_[st]) continue;
      const int d2 = static_cast<int>(st % 4);
      const int cell = static_cast<int>(st / 4);
      const int ix = cell % nx_;
      const int iy = cell / nx_;
      // Predecessor cell moved into (ix, iy) along d2.
      const int px = ix - static_cast<int>(kDirs[d2].x);
      const int py = iy - static_cast<int>(kDirs[d2].y);
      if (!cube_cell_ok(px, py)) continue;
      if (!gripper_ok(cell_center(px, py) - staging_offset() * kDirs[d2])) continue;
      for (int d = 0; d < 4; ++d) {
        const double nv = v + 1.0 + (d == d2 ? 0.0 : kTurnPenalty);
        const auto pst = static_cast<std::size_t>(index(px, py) * 4 + d);
        if (nv < value_[pst]) {
          value_[pst] = nv;
          pq.push({nv, pst});
        }
      }
    }
  }

  // Cost of starting a move in direction d from cell (ix, iy).
  double move_cost(int ix, int iy, int d) const {
    const int qx = ix + static_cast<int>(kDirs[d].x);
    const int qy = iy + static_cast<int>(kDirs[d].y);
    if (!cube_cell_ok(ix, iy) || !cube_cell_ok(qx, qy)) return std::numeric_limits<double>::infinity();
    if (!gripper_ok(cell_center(ix, iy) - staging_offset() * kDirs[d])) return std::numeric_limits<double>::infinity();
    return 1.0 + value_[static_cast<std::size_t>(index(qx, qy) * 4 + d)];
  }

  std::optional<Action> push_action(const EnvState& s) {
    const Vec2 cube = *s.cube;
    if (in_goal(spec_, s)) return Action{};
    const int cx = static_cast<int>(std::lround((cube.x - origin_.x) / kCell));
    const int cy = static_cast<int>(std::lround((cube.y - origin_.y) / kCell));
    // Plan from the nearest grid cell that has a route; the cube is rarely exactly on a cell.
    int best = -1;
    int bx = 0, by = 0;
    double best_key = std::numeric_limits<double>::infinity();
    for (int ix = cx - 2; ix <= cx + 2; ++ix) {
      for (int iy = cy - 2; iy <= cy + 2; ++iy) {
        const double offset = distance(cell_center(ix, iy), cube);
        for (int d = 0; d < 4; ++d) {
          const double c = move_cost(ix, iy, d) + (last_dir_ >= 0 && d != last_dir_ ? kTurnPenalty : 0.0);
          if (!std::isfinite(c)) continue;
          const double key = c + 1e3 * offset;
          if (key < best_key) {
            best_key = key;
            best = d;
            bx = ix;
            by = iy;
          }
        }
      }
    }
    if (best < 0) {
      // Inside the goal-cell set but not yet in the goal disc: push straight at the goal.
      const Vec2 to_goal = spec_.goal - cube;
      if (norm(to_goal) > spec_.goal_radius + 2 * kCell) return std::nullopt;
      const int d = std::abs(to_goal.x) > std::abs(to_goal.y) ? (to_goal.x > 0 ? 0 : 1) : (to_goal.y > 0 ? 2 : 3);
      return push_along(s, d, std::abs(dot(to_goal, kDirs[d])), false);
    }
    const Vec2 cell = cell_center(bx, by);
    // Off the planned lane: first nudge the cube sideways onto it.
    const double off = best < 2 ? cell.y - cube.y : cell.x - cube.x;
    if (std::abs(off) > 0.003) {
      const int side = best < 2 ? (off > 0 ? 2 : 3) : (off > 0 ? 0 : 1);
      if (gripper_ok(cube - staging_offset() * kDirs[side])) return push_along(s, side, std::abs(off), false);
    }
    // Advance to the next cell, or the one after when it is free too.
    const int dx = static_cast<int>(kDirs[best].x), dy = static_cast<int>(kDirs[best].y);
    const int k = cube_cell_ok(bx + 2 * dx, by + 2 * dy) ? 2 : 1;
    const double amount = dot(cell_center(bx + k * dx, by + k * dy) - cube, kDirs[best]);
    return push_along(s, best, amount, true);
  }

  // Push the cube `amount` along direction d, first walking to the staging point behind it.
  std::optional<Action> push_along(const EnvState& s, int d, double amount, bool main_move) {
    const Vec2 cube = *s.cube;
    const Vec2 dir = kDirs[d];
    const Vec2 contact = cube - (spec_.cube_half() + spec_.gripper_radius) * dir;
    const Vec2 rel = s.gripper - contact;
    const double along = dot(rel, dir);
    const Vec2 lateral = rel - along * dir;
    if (norm(lateral) <= 0.006 && along >= -0.035 && along <= 0.002) {
      if (main_move) last_dir_ = d;
      const double travel = -along + std::clamp(amount, 0.0, spec_.max_step);
      const Vec2 a = (travel * dir - lateral) / spec_.max_step;
      return Action{{std::clamp(a.x, -1.0, 1.0), std::clamp(a.y, -1.0, 1.0)}};
    }
    const Vec2 staging = cube - staging_offset() * dir;
    std::vector<Rect> blocks = walls_;
    blocks.push_back(square_at(cube, spec_.cube_side).inflated(spec_.gripper_radius));
    if (distance(s.gripper, staging) <= 0.004) return oracle_detail::toward(s.gripper, contact, spec_.max_step);
    return navigate(s.gripper, staging, blocks);
  }

  TaskSpec spec_;
  OracleConfig config_;
  std::vector<Rect> walls_;
  Vec2 origin_;
  int nx_ = 0;
  int ny_ = 0;
  std::vector<double> value_;
  int last_dir_ = -1;
};

/// Runs the scripted expert from `start` under Env::step. Returns success=false when
/// the episode fails or no plan exists.
inline Demonstration oracle_demonstrate(OraclePlanner& planner, const EnvState& start, Rng& rng,
                                        const OracleConfig& config = {}) {
  Env env(planner.spec());
  env.reset_to_state(start);
  planner.reset_episode();
  Demonstration demo;
  demo.start_state = start;
  demo.source = DemoSource::Oracle;
  std::normal_distribution<double> noise(0.0, config.noise_std);
  while (!env.done()) {
    auto a = planner.act(env.observe());
    if (!a) break;
    if (config.noise) {
      a->delta.x += noise(rng);
      a->delta.y += noise(rng);
    }
    demo.transitions.push_back(env.step(clip_action(*a)));
  }
  demo.success = ends_in_goal(demo.transitions);
  return demo;
}

inline Demonstration oracle_demonstrate(const TaskSpec& spec, const EnvState& start, Rng& rng,
                                        const OracleConfig& config = {}) {
  OraclePlanner planner(spec, config);
  return oracle_demonstrate(planner, start, rng, config);
}

}  // namespace acl
