#include "haven/harness.hpp"

#include "test_support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace haven;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("haven_harness_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrainConfig quick_climb() {
  TrainConfig c;
  c.env_id = "climb-po";
  c.total_env_steps = 120;
  c.batch_size = 4;
  c.eval_interval = 50;
  c.eval_episodes = 3;
  c.dump_episodes = 2;
  c.hidden_dim = 8;
  c.mixer_embed_dim = 4;
  c.hypernet_hidden_dim = 4;
  return c;
}

}  // namespace

TEST_CASE("every algo name maps to one variant and mixer", "[harness]") {
  const std::map<std::string, std::pair<Variant, MixerKind>> expected{
      {"haven-qmix", {Variant::kHaven, MixerKind::kQmix}},
      {"haven-vdn", {Variant::kHaven, MixerKind::kVdn}},
      {"qmix", {Variant::kFlat, MixerKind::kQmix}},
      {"vdn", {Variant::kFlat, MixerKind::kVdn}},
      {"haven-i", {Variant::kHavenI, MixerKind::kQmix}},
      {"haven-e", {Variant::kHavenE, MixerKind::kQmix}},
      {"haven-b", {Variant::kHavenB, MixerKind::kQmix}},
  };
  CHECK(algo_names().size() == expected.size());
  for (const auto& name : algo_names()) {
    TrainConfig c;
    apply_algo(c, name);
    INFO(name);
    REQUIRE(expected.count(name) == 1);
    CHECK(c.variant == expected.at(name).first);
    CHECK(c.mixer == expected.at(name).second);
    CHECK(algo_name(c) == name);
  }
  TrainConfig c;
  CHECK_THROWS_AS(apply_algo(c, "coma"), UsageError);
}

TEST_CASE("config survives an INI round trip", "[harness]") {
  TrainConfig c;
  c.lr = 0.001;
  c.k = 5;
  c.variant = Variant::kHavenB;
  c.mixer = MixerKind::kVdn;
  c.env_id = "switch-corridor";
  c.env_params = {{"n_agents", "3"}};
  c.record_wall_time = true;
  c.value_target_uses_target_net = true;
  std::istringstream in(config_to_ini(c));
  const TrainConfig back = parse_config(in);
  CHECK(config_to_ini(back) == config_to_ini(c));
  CHECK(back.lr == 0.001);
  CHECK(back.k == 5);
  CHECK(back.variant == Variant::kHavenB);
  CHECK(back.env_params.at("n_agents") == "3");
}

TEST_CASE("config grammar", "[harness]") {
  std::istringstream in(
      "; comment\n[train]\nalgo = vdn\nseed = 7\n[env]\nid = chain\nn_states = 4\n"
      "[eval]\ninterval = 500\n[run]\nrevision = abc\n");
  const TrainConfig c = parse_config(in);
  CHECK(c.variant == Variant::kFlat);
  CHECK(c.mixer == MixerKind::kVdn);
  CHECK(c.seed == 7);
  CHECK(c.env_id == "chain");
  CHECK(c.env_params.at("n_states") == "4");
  CHECK(c.eval_interval == 500);
  std::istringstream bad("[train]\nlearning_rate = 0.1\n");
  CHECK_THROWS_AS(parse_config(bad), UsageError);
  std::istringstream bad_value("[train]\nk = three\n");
  CHECK_THROWS_AS(parse_config(bad_value), UsageError);
}

TEST_CASE("empty config yields the documented defaults", "[harness]") {
  std::istringstream in("");
  const TrainConfig c = parse_config(in);
  CHECK(c.lr == 0.0005);
  CHECK(c.batch_size == 32);
  CHECK(c.buffer_capacity == 5000);
  CHECK(c.target_update_episodes == 200);
  CHECK(c.grad_clip == 10.0);
  CHECK(c.gamma_h == 0.99);
  CHECK(c.gamma_l == 0.99);
  CHECK(c.epsilon_start == 1.0);
  CHECK(c.epsilon_end == 0.05);
  CHECK(c.epsilon_anneal_steps == 50000);
  CHECK(c.k == 3);
  CHECK(c.n_macro_actions == 8);
  CHECK(c.rms_alpha == 0.99);
  CHECK(c.rms_eps == 1e-5);
}

TEST_CASE("nearest-rank percentiles", "[harness]") {
  const std::vector<double> v{0.3, 0.1, 0.5, 0.2, 0.4};
  CHECK(nearest_rank_percentile(v, 50) == 0.3);
  CHECK(nearest_rank_percentile(v, 25) == 0.2);
  CHECK(nearest_rank_percentile(v, 75) == 0.4);
  CHECK(nearest_rank_percentile(v, 100) == 0.5);
  CHECK(nearest_rank_percentile(v, 0) == 0.1);
  CHECK_THROWS(nearest_rank_percentile({}, 50));
}

TEST_CASE("sweep of a constant metric is flat", "[harness]") {
  std::vector<std::vector<MetricRow>> runs(5);
  for (auto& run : runs) {
    for (std::size_t i = 0; i < 3; ++i) {
      MetricRow r;
      r.env_step = i * 100 + (i == 2 ? 7 : 0);
      r.eval_success_rate = 0.5;
      run.push_back(r);
    }
  }
  TrainConfig c;
  c.eval_interval = 100;
  c.total_env_steps = 200;
  const auto points = aggregate_sweep(runs, c);
  REQUIRE(points.size() == 3);
  for (const auto& p : points) {
    CHECK(p.median == 0.5);
    CHECK(p.p25 == 0.5);
    CHECK(p.p75 == 0.5);
  }
  CHECK(points[2].env_step == 200);
}

TEST_CASE("metrics rows round trip through CSV", "[harness]") {
  MetricRow r;
  r.env_step = 100;
  r.episode = 4;
  r.epsilon = 0.1 + 0.2;
  r.loss_v = std::numeric_limits<double>::quiet_NaN();
  r.loss_qh = 1e-17;
  r.train_return = -3.25;
  const auto path = fs::temp_directory_path() / "haven_metrics_rt.csv";
  {
    std::ofstream out(path);
    out << metrics_header() << '\n' << format_metric_row(r) << '\n';
  }
  CHECK(metrics_header() ==
        "env_step,episode,epsilon,loss_v,loss_qh,loss_ql,train_return,eval_return_mean,"
        "eval_success_rate,wall_ms");
  const auto rows = read_metrics_csv(path);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].epsilon == r.epsilon);
  CHECK(std::isnan(rows[0].loss_v));
  CHECK(rows[0].loss_qh == 1e-17);
  CHECK(format_metric_row(rows[0]) == format_metric_row(r));
  fs::remove(path);
}

TEST_CASE("policy dump has L*n rows and constant macro actions per segment", "[harness]") {
  auto env = make_environment("switch-corridor");
  TrainConfig c;
  c.env_id = "switch-corridor";
  const HierarchicalPolicy policy(policy_dims(c, env->spec()), 3);
  const auto rows = export_policy_dump(policy, *env, 3, 2, 11);
  std::map<std::size_t, std::size_t> steps;  // episode -> length
  for (const auto& r : rows) steps[r.episode] = std::max(steps[r.episode], r.t + 1);
  std::size_t expected = 0;
  for (auto [ep, len] : steps) expected += len * env->spec().n_agents;
  CHECK(rows.size() == expected);
  CHECK(steps.size() == 2);
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, int> held;
  for (const auto& r : rows) {
    CHECK(r.state.size() == env->spec().state_dim);
    const auto key = std::make_tuple(r.episode, r.agent, r.t / 3);
    if (held.count(key)) CHECK(held[key] == r.macro_action);
    held[key] = r.macro_action;
    CHECK(r.macro_action >= 0);
  }
}

TEST_CASE("policy dump rejects a mismatched checkpoint", "[harness]") {
  TrainConfig c = quick_climb();
  auto climb = make_environment("climb-po");
  const HierarchicalPolicy policy(policy_dims(c, climb->spec()), 1);
  const Checkpoint cp = make_checkpoint(policy, c, 0);
  CHECK_NOTHROW(export_policy_dump(cp, *climb, 1, 1));
  auto corridor = make_environment("switch-corridor");
  CHECK_THROWS(export_policy_dump(cp, *corridor, 1, 1));
}

TEST_CASE("run directory layout and byte-identical reruns", "[harness]") {
  const TrainConfig c = quick_climb();
  const auto a = fresh_dir("run_a");
  const auto b = fresh_dir("run_b");
  const auto result = run_experiment(c, a);
  run_experiment(c, b);
  CHECK(fs::exists(a / "manifest"));
  CHECK(fs::exists(a / "policy_dump.csv"));
  CHECK(fs::exists(a / "checkpoints" / "final.ckpt"));
  CHECK(fs::exists(a / "checkpoints" / "step_0.ckpt"));
  CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
  CHECK(slurp(a / "policy_dump.csv") == slurp(b / "policy_dump.csv"));
  REQUIRE(result.rows.size() >= 2);
  for (std::size_t i = 1; i < result.rows.size(); ++i) {
    CHECK(result.rows[i].env_step > result.rows[i - 1].env_step);
  }
  CHECK(result.rows.back().env_step >= c.total_env_steps);

  // The manifest reloads as a config describing the same run.
  const TrainConfig again = load_config(a / "manifest");
  CHECK(config_to_ini(again) == config_to_ini(c));
  const std::string header = slurp(a / "policy_dump.csv").substr(0, 80);
  CHECK(header.rfind("episode,t,agent,macro_action,primitive_action,f0,", 0) == 0);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("sweep output is deterministic", "[harness]") {
  TrainConfig c = quick_climb();
  c.total_env_steps = 60;
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto a = fresh_dir("sweep_a");
  const auto b = fresh_dir("sweep_b");
  run_sweep(c, seeds, a);
  run_sweep(c, seeds, b);
  CHECK(fs::exists(a / "seed_1" / "metrics.csv"));
  CHECK(slurp(a / "sweep.csv") == slurp(b / "sweep.csv"));
  CHECK_THROWS(run_sweep(c, std::vector<std::uint64_t>{1}, a));
  fs::remove_all(a);
  fs::remove_all(b);
}
