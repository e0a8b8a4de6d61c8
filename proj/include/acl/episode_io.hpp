#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "acl/json.hpp"

namespace acl {

/// Line-delimited episode file. One JSON object per line:
///
///   {"type":"episode_file","version":1,"task":"PushV0"}
///   {"type":"episode_begin","index":0,"source":"oracle","success":true,"start_state":{...}}
///   {"type":"transition", "s":{...},"a":[dx,dy],"r":-1.0,"s_next":{...},"terminal":false,"cause":"none"}
///   ...
///   {"type":"episode_end","index":0,"length":37}
///
/// See docs/episode_format.md.
inline constexpr int kEpisodeFileVersion = 1;

inline void write_episodes(std::ostream& os, TaskId task, const std::vector<Demonstration>& demos) {
  os << json{{"type", "episode_file"}, {"version", kEpisodeFileVersion}, {"task", std::string(to_string(task))}}.dump()
     << '\n';
  for (std::size_t i = 0; i < demos.size(); ++i) {
    const auto& d = demos[i];
    os << json{{"type", "episode_begin"},
               {"index", i},
               {"source", std::string(to_string(d.source))},
               {"success", d.success},
               {"start_state", to_json(d.start_state)}}
              .dump()
       << '\n';
    for (const auto& t : d.transitions) {
      json j = to_json(t);
      j["type"] = "transition";
      os << j.dump() << '\n';
    }
    os << json{{"type", "episode_end"}, {"index", i}, {"length", d.transitions.size()}}.dump() << '\n';
  }
}

struct EpisodeFile {
  TaskId task = TaskId::ReachV0;
  std::vector<Demonstration> demos;
};

inline EpisodeFile read_episodes(std::istream& is) {
  EpisodeFile out;
  std::string line;
  bool have_header = false;
  bool in_episode = false;
  Demonstration cur;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    std::string type;
    try {
      j = json::parse(line);
      type = j.at("type").get<std::string>();
    } catch (const json::exception& e) {
      throw IoError("episode file line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      if (type == "episode_file") {
        if (j.at("version").get<int>() != kEpisodeFileVersion) throw IoError("unsupported episode file version");
        out.task = parse_task_id(j.at("task").get<std::string>());
        have_header = true;
      } else if (type == "episode_begin") {
        if (in_episode) throw IoError("episode_begin inside an open episode at line " + std::to_string(line_no));
        cur = Demonstration{};
        cur.source = parse_demo_source(j.at("source").get<std::string>());
        cur.success = j.at("success").get<bool>();
        cur.start_state = state_from_json(j.at("start_state"));
        in_episode = true;
      } else if (type == "transition") {
        if (!in_episode) throw IoError("transition outside an episode at line " + std::to_string(line_no));
        cur.transitions.push_back(transition_from_json(j));
      } else if (type == "episode_end") {
        if (!in_episode) throw IoError("episode_end without episode_begin at line " + std::to_string(line_no));
        if (j.at("length").get<std::size_t>() != cur.transitions.size()) throw IoError("episode length mismatch");
        out.demos.push_back(std::move(cur));
        in_episode = false;
      } else {
        throw IoError("unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw IoError("episode file line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw IoError("episode file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw IoError("episode file has no header");
  if (in_episode) throw IoError("episode file ends inside an episode");
  return out;
}

inline void save_episodes(const std::string& path, TaskId task, const std::vector<Demonstration>& demos) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path);
  write_episodes(os, task, demos);
}

inline EpisodeFile load_episodes(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  return read_episodes(is);
}

}  // namespace acl
