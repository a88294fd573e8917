#pragma once

// Experiment plumbing: config files, run directories, metric logs, policy
// dumps and multi-seed sweeps.
//
// Config grammar (INI): `key = value` lines under [train], [env] and [eval];
// `;` or `#` starts a comment. [env] takes `id` plus environment parameters,
// [eval] takes interval, episodes, dump_episodes, record_wall_time. Any other
// section (for example [run] in a manifest) is ignored, so a manifest can be
// fed back as a config.

#include "haven/checkpoint.hpp"
#include "haven/learner.hpp"

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

namespace haven {

// Bad flag, config key or id; maps to exit status 1.
class UsageError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

TrainConfig parse_config(std::istream& in);
TrainConfig load_config(const std::filesystem::path& path);
std::string config_to_ini(const TrainConfig& config);

// haven-qmix, haven-vdn, qmix, vdn, haven-i, haven-e, haven-b.
void apply_algo(TrainConfig& config, const std::string& algo);
std::string algo_name(const TrainConfig& config);
const std::vector<std::string>& algo_names();

std::string metrics_header();
std::string format_metric_row(const MetricRow& row);
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);

// Policy checkpoint plus run metadata (k, env id, seed, env_step).
Checkpoint make_checkpoint(const HierarchicalPolicy& policy, const TrainConfig& config,
                           std::size_t env_step);

struct PolicyDumpRow {
  std::size_t episode = 0;
  std::size_t t = 0;
  std::size_t agent = 0;
  int macro_action = -1;  // -1 for a flat policy
  int primitive_action = 0;
  std::vector<double> state;
};

// Greedy rollouts; one row per (episode, t, agent).
std::vector<PolicyDumpRow> export_policy_dump(const HierarchicalPolicy& policy, Environment& env,
                                              std::size_t k, std::size_t episodes,
                                              std::uint64_t seed);
// Rejects a checkpoint whose shapes or env id disagree with env.
std::vector<PolicyDumpRow> export_policy_dump(const Checkpoint& checkpoint, Environment& env,
                                              std::size_t episodes, std::uint64_t seed);
void write_policy_dump(const std::filesystem::path& path, std::span<const PolicyDumpRow> rows,
                       std::size_t state_dim);

struct RunResult {
  std::vector<MetricRow> rows;
  std::filesystem::path out_dir;
};

// Trains to completion and writes manifest, metrics.csv, checkpoints/ and
// policy_dump.csv under out_dir. On divergence a diagnostic checkpoint
// (checkpoints/diverged.ckpt) is written before DivergenceError propagates.
RunResult run_experiment(const TrainConfig& config, const std::filesystem::path& out_dir);

// Nearest rank: the ceil(p/100 * n)-th smallest value (1-based).
double nearest_rank_percentile(std::vector<double> values, double p);

struct SweepPoint {
  std::size_t env_step = 0;
  double median = 0.0;
  double p25 = 0.0;
  double p75 = 0.0;
};

// Aligns runs by eval index and summarises eval_success_rate across seeds.
// env_step is the nominal eval point (i * eval_interval; the last row is the
// final step count).
std::vector<SweepPoint> aggregate_sweep(const std::vector<std::vector<MetricRow>>& runs,
                                        const TrainConfig& config);
std::string format_sweep_csv(std::span<const SweepPoint> points);

// Runs every seed under out_dir/seed_<s>/ and writes out_dir/sweep.csv.
std::vector<SweepPoint> run_sweep(const TrainConfig& config, std::span<const std::uint64_t> seeds,
                                  const std::filesystem::path& out_dir);

std::string revision();

}  // namespace haven
