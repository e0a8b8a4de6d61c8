#pragma once

#include <nlohmann/json.hpp>

#include "acl/demonstration.hpp"
#include "acl/env.hpp"

namespace acl {

using nlohmann::json;

inline json to_json_vec(Vec2 v) { return json::array({v.x, v.y}); }

inline Vec2 vec_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ValidationError("expected a 2-element array");
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

inline json to_json(const EnvState& s) {
  return json{{"gripper", to_json_vec(s.gripper)}, {"cube", s.cube ? to_json_vec(*s.cube) : json(nullptr)}};
}

inline EnvState state_from_json(const json& j) {
  EnvState s;
  s.gripper = vec_from_json(j.at("gripper"));
  if (j.contains("cube") && !j.at("cube").is_null()) s.cube = vec_from_json(j.at("cube"));
  return s;
}

inline json to_json(const Transition& t) {
  return json{{"s", to_json(t.s)},          {"a", to_json_vec(t.a.delta)},         {"r", t.r},
              {"s_next", to_json(t.s_next)}, {"terminal", t.terminal},             {"cause", std::string(to_string(t.cause))}};
}

inline Transition transition_from_json(const json& j) {
  Transition t;
  t.s = state_from_json(j.at("s"));
  t.a = Action{vec_from_json(j.at("a"))};
  t.r = j.at("r").get<double>();
  t.s_next = state_from_json(j.at("s_next"));
  t.terminal = j.at("terminal").get<bool>();
  t.cause = parse_terminal_cause(j.at("cause").get<std::string>());
  return t;
}

inline json to_json(const Rect& r) { return json{{"lo", to_json_vec(r.lo)}, {"hi", to_json_vec(r.hi)}}; }

inline json to_json(const TaskSpec& spec) {
  json obstacles = json::array();
  for (const auto& o : spec.obstacles) obstacles.push_back(to_json(o));
  return json{{"task_id", std::string(to_string(spec.task_id))},
              {"workspace", to_json(spec.workspace)},
              {"goal", to_json_vec(spec.goal)},
              {"goal_radius", spec.goal_radius},
              {"obstacles", obstacles},
              {"start_line", json::array({to_json_vec(spec.start_line.a), to_json_vec(spec.start_line.b)})},
              {"neutral_pose", to_json_vec(spec.neutral_pose)},
              {"max_episode_len", spec.max_episode_len},
              {"cube_side", spec.cube_side},
              {"max_step", spec.max_step},
              {"gripper_radius", spec.gripper_radius}};
}

}  // namespace acl
