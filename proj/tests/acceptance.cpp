// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "acl/harness.hpp"
#include "acl/rl/awac.hpp"
#include "acl/rl/ddpgfd.hpp"
#include "support/scripted_trace.hpp"

using namespace acl;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using ParamSpan = std::span<double>;

net::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  net::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

rl::Batch random_batch(int obs_dim, Rng& rng) {
  const Eigen::Index n = 4;
  rl::Batch b;
  b.obs = random_matrix(obs_dim, n, rng, 0.5);
  b.next_obs = random_matrix(obs_dim, n, rng, 0.5);
  b.actions = random_matrix(2, n, rng, 0.5).cwiseMax(-1.0).cwiseMin(1.0);
  b.rewards = random_matrix(n, 1, rng, 0.5);
  b.not_done = net::Vector::Ones(n);
  b.sources = {SampleSource::Demo, SampleSource::Rollout, SampleSource::Demo, SampleSource::Rollout};
  return b;
}

/// ||analytic - fd|| / max(||analytic||, ||fd||) over every parameter, central differences.
template <class Loss>
double gradient_rel_error(ParamSpan params, const std::vector<double>& analytic, Loss loss) {
  const double h = 1e-6;
  double num = 0.0, na = 0.0, nf = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = loss();
    params[i] = keep - h;
    const double down = loss();
    params[i] = keep;
    const double fd = (up - down) / (2.0 * h);
    num += (fd - analytic[i]) * (fd - analytic[i]);
    na += analytic[i] * analytic[i];
    nf += fd * fd;
  }
  const double den = std::max(std::sqrt(std::max(na, nf)), 1e-300);
  return std::sqrt(num) / den;
}

Verdict p1_gradients() {
  Rng rng(2024);
  const int trials = 100;
  double worst_critic = 0.0, worst_awac = 0.0, worst_ddpg = 0.0;
  int bc_trials = 0;
  for (int t = 0; t < trials; ++t) {
    const int obs_dim = t % 2 ? 4 : 2;
    rl::AwacConfig ac;
    ac.hidden = {16, 16};
    ac.critic_layer_norm = t % 3 != 0;
    rl::LearnerState l = rl::make_learner(obs_dim, 2, ac, rng);
    l.actor.net.init_uniform(rng);
    std::uniform_real_distribution<double> ls(-1.5, 0.5);
    l.actor.log_std = {ls(rng), ls(rng)};
    const rl::Batch b = random_batch(obs_dim, rng);

    const net::Vector y = rl::q_target(l, b, rng);
    std::vector<double> g(l.critic1.num_params(), 0.0);
    rl::critic_loss_grad(l.critic1, b, y, g);
    worst_critic = std::max(worst_critic, gradient_rel_error(l.critic1.params(), g, [&] {
                              return rl::critic_loss(l.critic1, b, y);
                            }));

    const net::Vector w = rl::awac_weights(random_matrix(4, 1, rng, 1.0), 1.0, 20.0);
    std::vector<double> g_net(l.actor.net.num_params(), 0.0), g_std(2, 0.0);
    rl::actor_loss_grad(l.actor, b.obs, b.actions, w, g_net, g_std);
    auto actor_loss = [&] {
      std::vector<double> s1(l.actor.net.num_params()), s2(2);
      return rl::actor_loss_grad(l.actor, b.obs, b.actions, w, s1, s2);
    };
    std::vector<double> all_g = g_net;
    all_g.insert(all_g.end(), g_std.begin(), g_std.end());
    // Perturb network weights and log-std through one flat view.
    std::vector<double> flat(l.actor.net.params().begin(), l.actor.net.params().end());
    flat.insert(flat.end(), l.actor.log_std.begin(), l.actor.log_std.end());
    auto loss_flat = [&] {
      auto p = l.actor.net.params();
      std::copy(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(p.size()), p.begin());
      l.actor.log_std = {flat[p.size()], flat[p.size() + 1]};
      return actor_loss();
    };
    worst_awac = std::max(worst_awac, gradient_rel_error(flat, all_g, loss_flat));

    rl::DdpgConfig dc;
    dc.hidden = {16, 16};
    dc.critic_layer_norm = ac.critic_layer_norm;
    rl::DdpgLearner d = rl::make_ddpg_learner(obs_dim, 2, dc, rng);
    d.actor.init_uniform(rng);
    std::vector<double> gd(d.actor.num_params(), 0.0);
    int active = 0;
    rl::ddpg_actor_loss_grad(d.actor, d.critic1, b, 1.0, gd, &active);
    bc_trials += active > 0;
    worst_ddpg = std::max(worst_ddpg, gradient_rel_error(d.actor.params(), gd, [&] {
                            std::vector<double> s(d.actor.num_params());
                            return rl::ddpg_actor_loss_grad(d.actor, d.critic1, b, 1.0, s);
                          }));
  }
  const bool pass = worst_critic < 1e-4 && worst_awac < 1e-4 && worst_ddpg < 1e-4;
  return {pass, fmt::format("worst relative error over {} trials: critic {:.2e}, awac actor {:.2e}, ddpgfd-bc actor "
                            "{:.2e} (bc term active in {} trials)",
                            trials, worst_critic, worst_awac, worst_ddpg, bc_trials)};
}

Verdict p2_selection() {
  int mismatches = 0, cells = 0;
  for (double w : {0.5, 0.7, 1.0}) {
    for (int k = 0; k <= 100; ++k) {
      const double q = k / 100.0;
      const int expect = k == 0 ? 2 : (q >= w ? 1 : 3);
      mismatches += reachability_score(q, w) != expect;
      ++cells;
    }
  }
  Rng rng(77);
  double worst = 0.0;
  for (std::size_t ties : {2u, 3u, 5u}) {
    CurriculumList list;
    for (std::size_t i = 0; i < ties + 2; ++i) {
      Curriculum c;
      c.id = static_cast<int>(i);
      c.last_score = i < ties ? 3 : 2;
      list.push_back(c);
    }
    std::vector<int> hits(list.size(), 0);
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) ++hits[select_curriculum(list, rng)];
    for (std::size_t i = 0; i < list.size(); ++i) {
      const double expect = i < ties ? 1.0 / static_cast<double>(ties) : 0.0;
      worst = std::max(worst, std::abs(hits[i] / static_cast<double>(trials) - expect));
    }
  }
  return {mismatches == 0 && worst <= 0.02,
          fmt::format("{} / {} grid cells match; worst tie frequency deviation {:.4f} over 10^4 trials", cells - mismatches,
                      cells, worst)};
}

Verdict p3_trace() {
  const auto run = acl::testing::run_scripted_trace(0);
  const auto expect = acl::testing::expected_trace();
  std::size_t first_diff = 0;
  while (first_diff < std::min(run.lines.size(), expect.size()) && run.lines[first_diff] == expect[first_diff]) {
    ++first_diff;
  }
  const bool pass = run.base_length == 10 && run.lines == expect;
  std::string detail = fmt::format("{} events; T_b={}", run.lines.size(), run.base_length);
  if (!pass && first_diff < run.lines.size()) detail += " first mismatch: '" + run.lines[first_diff] + "'";
  return {pass, detail};
}

/// Learner that succeeds with probability 1/2, used to drive many queries cheaply.
struct CoinLearner {
  std::uint64_t rollouts = 0;
  Rng rng{5};
  RolloutResult rollout(const EnvState&, RolloutKind, Rng&) {
    ++rollouts;
    return {std::bernoulli_distribution(0.5)(rng), 1};
  }
  void add_demonstration(const Demonstration&) {}
  bool exhausted() const { return false; }
};

std::vector<json> stub_queries(TaskId id, int n_d, std::uint64_t seed) {
  const TaskSpec spec = make_task(id);
  ScheduleConfig sc;
  sc.n_eval = 2;
  sc.n_train = 2;
  sc.n_q = 2;
  sc.n_d = n_d;
  sc.delta_g = 5;
  OracleDemonstrator oracle(spec);
  CoinLearner learner;
  std::vector<json> out;
  CurriculumScheduler<CoinLearner> sched(spec, sc, learner, oracle, [&](const json& e) {
    if (e.at("event") == "query") out.push_back(e);
  });
  Rng rng(seed);
  sched.bootstrap(rng);
  for (int i = 0; i < 10 * n_d && sched.state().n_d < n_d; ++i) sched.iterate(rng);
  return out;
}

Verdict p4_equidistant(const std::vector<json>& run_queries) {
  std::vector<json> all = run_queries;
  const std::size_t from_runs = all.size();
  for (TaskId id : {TaskId::ReachV0, TaskId::ReachV1, TaskId::PushV0, TaskId::PushV1}) {
    const auto q = stub_queries(id, 30, 100 + static_cast<std::uint64_t>(id));
    all.insert(all.end(), q.begin(), q.end());
  }
  double worst = 0.0;
  for (const auto& e : all) {
    worst = std::max(worst, std::abs(e.at("start_goal_distance").get<double>() -
                                     e.at("anchor_goal_distance").get<double>()));
  }
  return {all.size() >= 100 && worst <= 1e-9,
          fmt::format("{} query events ({} from training runs), worst |d_start - d_anchor| = {:.3e}", all.size(),
                      from_runs, worst)};
}

std::string conv_str(const RunResult& r) {
  return r.convergence_step ? std::to_string(*r.convergence_step) : "never";
}

Verdict p5_reach(const std::vector<RunResult>& cur, const std::vector<RunResult>& early) {
  int reached = 0, faster = 0;
  std::string rows;
  for (std::size_t i = 0; i < cur.size(); ++i) {
    const auto& c = cur[i];
    const auto& e = early[i];
    reached += !c.failed && c.best_success >= 0.95;
    const bool c_faster = !c.failed && c.convergence_step &&
                          (!e.convergence_step || e.failed || *c.convergence_step < *e.convergence_step);
    faster += c_faster;
    rows += fmt::format(" [seed {}: best {:.2f} final {:.2f} conv {} vs early-like {}]", c.seed, c.best_success,
                        c.final_success, conv_str(c), conv_str(e));
  }
  return {reached >= 4 && faster >= 3,
          fmt::format("success>=0.95 in {}/5 seeds, faster convergence in {}/5 seeds;{}", reached, faster, rows)};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Verdict p6_push(const std::map<Method, std::vector<RunResult>>& runs) {
  std::map<Method, double> med;
  for (const auto& [m, rs] : runs) {
    std::vector<double> f;
    for (const auto& r : rs) f.push_back(r.failed ? 0.0 : r.final_success);
    med[m] = median(f);
  }
  const double c = med.at(Method::Curriculum);
  bool pass = true;
  std::string detail = fmt::format("median final success: curriculum {:.2f}", c);
  for (Method m : {Method::AwacOffline, Method::DdpgfdBc, Method::EarlyLike}) {
    pass = pass && c > med.at(m);
    detail += fmt::format(", {} {:.2f}", to_string(m), med.at(m));
  }
  return {pass, detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  if (!is) return {};
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Verdict p7_determinism(const ExperimentConfig& reach, const fs::path& out) {
  std::vector<std::string> checked;
  bool pass = true;
  auto twice = [&](ExperimentConfig c, const std::string& label) {
    c.checkpoint_interval = 0;
    c.step_budget = 30'000;
    std::array<std::string, 2> csv;
    for (int rep = 0; rep < 2; ++rep) {
      c.output_dir = (out / fmt::format("{}_rep{}", label, rep)).string();
      const RunResult r = run_seed(c, c.seeds.front());
      csv[static_cast<std::size_t>(rep)] = slurp(fs::path(r.run_dir) / "metrics.csv");
      if (r.failed) pass = false;
    }
    const bool same = !csv[0].empty() && csv[0] == csv[1];
    pass = pass && same;
    checked.push_back(fmt::format("{} {}", label, same ? "identical" : "DIFFERENT"));
  };
  ExperimentConfig oracle = reach;
  oracle.seeds = {0};
  oracle.method = Method::Curriculum;
  oracle.demonstrator = DemoSource::Oracle;
  twice(oracle, "curriculum_oracle");
  ExperimentConfig pool = oracle;
  pool.demonstrator = DemoSource::Pool;
  twice(pool, "curriculum_pool");
  ExperimentConfig early = oracle;
  early.method = Method::EarlyLike;
  twice(early, "early_like_pool");
  std::string detail;
  for (const auto& s : checked) detail += (detail.empty() ? "" : ", ") + s;
  return {pass, detail};
}

Verdict p8_invariants(const std::vector<std::pair<ExperimentConfig, RunResult>>& runs) {
  int bad = 0;
  std::string first;
  std::uint64_t mixed = 0;
  for (const auto& [c, r] : runs) {
    std::string why;
    if (r.failed) why = "run failed: " + r.error;
    else if (r.demos > c.schedule.n_d + 1) why = fmt::format("{} demos", r.demos);
    else if (!r.demo_buffer_all_successful) why = "unsuccessful demo in buffer";
    else if (r.unbalanced_batches != 0) why = fmt::format("{} unbalanced batches", r.unbalanced_batches);
    else if (r.mixed_batches == 0) why = "no mixed batches";
    mixed += r.mixed_batches;
    if (!why.empty()) {
      ++bad;
      if (first.empty()) first = fmt::format(" first: {} {} seed {}: {}", to_string(r.method), to_string(r.task), r.seed, why);
    }
  }
  return {bad == 0 && !runs.empty(),
          fmt::format("{} runs checked, {} violations, {} balanced batches drawn;{}", runs.size(), bad, mixed, first)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria P1-P8"};
  std::string config_dir = ACL_CONFIG_DIR, out_dir = "acceptance_runs";
  std::vector<std::string> only;
  app.add_option("--configs", config_dir, "Directory holding reach_desk.yaml and push_desk.yaml");
  app.add_option("--out", out_dir, "Run output directory");
  app.add_option("--only", only, "Subset of criteria, e.g. P1 P3");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);
  if (const char* v = std::getenv("ACL_VERBOSE"); v && std::string(v) == "1") spdlog::set_level(spdlog::level::info);

  const std::set<std::string> wanted(only.begin(), only.end());
  auto want = [&](const std::string& p) { return wanted.empty() || wanted.count(p); };
  const fs::path out = fs::absolute(out_dir);
  std::vector<std::pair<std::string, Verdict>> verdicts;
  auto report = [&](const std::string& name, Verdict v) {
    std::cout << name << (v.pass ? " PASS " : " FAIL ") << v.detail << std::endl;
    verdicts.emplace_back(name, std::move(v));
  };
  auto guarded = [&](const std::string& name, auto f) {
    try {
      report(name, f());
    } catch (const std::exception& e) {
      report(name, {false, std::string("error: ") + e.what()});
    }
  };

  if (want("P1")) guarded("P1", p1_gradients);
  if (want("P2")) guarded("P2", p2_selection);
  if (want("P3")) guarded("P3", p3_trace);

  const bool learning = want("P4") || want("P5") || want("P6") || want("P7") || want("P8");
  ExperimentConfig reach, push;
  std::vector<std::pair<ExperimentConfig, RunResult>> all_runs;
  std::vector<json> run_queries;
  std::vector<RunResult> reach_cur, reach_early;
  std::map<Method, std::vector<RunResult>> push_runs;
  if (learning) {
    try {
      reach = load_config((fs::path(config_dir) / "reach_desk.yaml").string());
      push = load_config((fs::path(config_dir) / "push_desk.yaml").string());
    } catch (const std::exception& e) {
      for (const char* p : {"P4", "P5", "P6", "P7", "P8"}) {
        if (want(p)) report(p, {false, std::string("cannot load configs: ") + e.what()});
      }
      return 1;
    }
    auto run_all = [&](ExperimentConfig c, Method m, const std::string& sub) {
      c.method = m;
      c.checkpoint_interval = 0;
      c.output_dir = (out / sub).string();
      auto rs = run_experiment(c);
      for (const auto& r : rs) {
        all_runs.emplace_back(c, r);
        run_queries.insert(run_queries.end(), r.query_events.begin(), r.query_events.end());
        std::cerr << fmt::format("  {} {} seed {}: final {:.2f} best {:.2f} converged {} ({} steps, {:.0f}s)\n",
                                 to_string(m), to_string(c.task), r.seed, r.final_success, r.best_success,
                                 conv_str(r), r.env_steps, r.wall_seconds);
      }
      return rs;
    };
    if (want("P5") || want("P4") || want("P8")) {
      reach_cur = run_all(reach, Method::Curriculum, "p5");
      reach_early = run_all(reach, Method::EarlyLike, "p5");
    }
    if (want("P6") || want("P4") || want("P8")) {
      for (Method m : {Method::Curriculum, Method::AwacOffline, Method::DdpgfdBc, Method::EarlyLike}) {
        push_runs[m] = run_all(push, m, "p6");
      }
    }
  }
  if (want("P4")) {
    // Only curriculum runs issue equidistant queries.
    std::vector<json> eq;
    for (const auto& e : run_queries) {
      if (e.contains("anchor_goal_distance")) eq.push_back(e);
    }
    guarded("P4", [&] { return p4_equidistant(eq); });
  }
  if (want("P5")) guarded("P5", [&] { return p5_reach(reach_cur, reach_early); });
  if (want("P6")) guarded("P6", [&] { return p6_push(push_runs); });
  if (want("P7")) guarded("P7", [&] { return p7_determinism(reach, out / "p7"); });
  if (want("P8")) guarded("P8", [&] { return p8_invariants(all_runs); });

  const bool all_pass = std::all_of(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.second.pass; });
  std::cout << (all_pass ? "ALL PASS" : "SOME CRITERIA FAILED") << std::endl;
  return all_pass ? 0 : 1;
}
