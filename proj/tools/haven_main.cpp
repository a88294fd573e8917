// haven: train, sweep and dump entry points.
//
//   haven train --algo haven-qmix --env gather-then-deliver --seed 1 --out runs/a
//   haven sweep --config configs/gather.ini --seeds 1,2,3 --out runs/sweep
//   haven dump --checkpoint runs/a/checkpoints/final.ckpt --env gather-then-deliver --out d.csv
//
// A leading flag implies `train`. Exit status: 0 ok, 1 usage, 2 runtime.

#include "haven/harness.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

struct CommonFlags {
  std::string config;
  std::string algo;
  std::string env;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> total_steps;
  std::string out;
};

void add_common(CLI::App& cmd, CommonFlags& f) {
  cmd.add_option("--config", f.config, "INI config file")->check(CLI::ExistingFile);
  cmd.add_option("--algo", f.algo, "haven-qmix|haven-vdn|qmix|vdn|haven-i|haven-e|haven-b");
  cmd.add_option("--env", f.env, "climb-po|switch-corridor|gather-then-deliver|chain");
  cmd.add_option("--total-steps", f.total_steps, "environment steps to train for");
  cmd.add_option("--out", f.out, "output directory")->required();
}

// Defaults <- config file <- flags.
haven::TrainConfig resolve(const CommonFlags& f) {
  haven::TrainConfig config = f.config.empty() ? haven::TrainConfig{} : haven::load_config(f.config);
  if (!f.algo.empty()) haven::apply_algo(config, f.algo);
  if (!f.env.empty()) {
    if (!haven::is_known_environment(f.env)) {
      throw haven::UsageError("unknown env '" + f.env + "'");
    }
    // Parameters from the config belong to the config's environment.
    if (f.env != config.env_id) config.env_params.clear();
    config.env_id = f.env;
  }
  if (f.seed) config.seed = *f.seed;
  if (f.total_steps) config.total_env_steps = *f.total_steps;
  return config;
}

int run(int argc, char** argv) {
  CLI::App app{"HAVEN: hierarchical value decomposition for cooperative multi-agent RL"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  auto* train = app.add_subcommand("train", "train one run");
  add_common(*train, train_flags);
  train->add_option("--seed", train_flags.seed, "run seed");

  CommonFlags sweep_flags;
  std::vector<std::uint64_t> seeds;
  auto* sweep = app.add_subcommand("sweep", "train several seeds and aggregate success rates");
  add_common(*sweep, sweep_flags);
  sweep->add_option("--seeds", seeds, "seed list")->delimiter(',')->required();

  std::string checkpoint_path, dump_env, dump_config, dump_out;
  std::size_t dump_episodes = 4;
  std::uint64_t dump_seed = 1;
  auto* dump = app.add_subcommand("dump", "greedy rollouts of a checkpoint to policy_dump.csv");
  dump->add_option("--checkpoint", checkpoint_path)->required()->check(CLI::ExistingFile);
  dump->add_option("--env", dump_env, "environment id (default: the checkpoint's)");
  dump->add_option("--config", dump_config, "config whose [env] parameters to use")
      ->check(CLI::ExistingFile);
  dump->add_option("--episodes", dump_episodes);
  dump->add_option("--seed", dump_seed);
  dump->add_option("--out", dump_out)->required();

  std::vector<std::string> args(argv + 1, argv + argc);
  if (!args.empty() && args.front().rfind("--", 0) == 0 && args.front() != "--help") {
    args.insert(args.begin(), "train");
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) {
      const auto config = resolve(train_flags);
      const auto result = haven::run_experiment(config, train_flags.out);
      const auto& last = result.rows.back();
      std::cout << "done: env_step " << last.env_step << ", eval success "
                << haven::format_double(last.eval_success_rate) << ", artifacts in "
                << train_flags.out << '\n';
    } else if (*sweep) {
      const auto config = resolve(sweep_flags);
      const auto points = haven::run_sweep(config, seeds, sweep_flags.out);
      std::cout << haven::format_sweep_csv(points);
    } else if (*dump) {
      const auto checkpoint = haven::load_checkpoint(checkpoint_path);
      haven::EnvParams params;
      std::string env_id = dump_env;
      if (!dump_config.empty()) {
        const auto config = haven::load_config(dump_config);
        params = config.env_params;
        if (env_id.empty()) env_id = config.env_id;
      }
      if (env_id.empty()) {
        auto it = checkpoint.meta.find("env_id");
        if (it == checkpoint.meta.end()) throw haven::UsageError("--env required");
        env_id = it->second;
      }
      if (!haven::is_known_environment(env_id)) {
        throw haven::UsageError("unknown env '" + env_id + "'");
      }
      auto env = haven::make_environment(env_id, params);
      const auto rows = haven::export_policy_dump(checkpoint, *env, dump_episodes, dump_seed);
      haven::write_policy_dump(dump_out, rows, env->spec().state_dim);
      std::cout << rows.size() << " rows written to " << dump_out << '\n';
    }
  } catch (const haven::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const haven::EnvError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
