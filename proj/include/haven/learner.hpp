#pragma once

// Losses for the three network families and the episode-level training loop.

#include "haven/config.hpp"
#include "haven/hierarchy.hpp"
#include "haven/optim.hpp"
#include "haven/policy.hpp"
#include "haven/replay.hpp"

#include <functional>
#include <optional>

namespace haven {

// reward + gamma * next_value, with the bootstrap dropped on terminal steps.
double bootstrap_target(double reward, double next_value, bool terminal, double gamma);

PolicyDims policy_dims(const TrainConfig& config, const EnvSpec& spec);

struct UpdateLosses {
  std::optional<double> value;
  std::optional<double> macro;
  std::optional<double> low;
};

class Learner {
public:
  Learner(const TrainConfig& config, HierarchicalPolicy& policy);

  // V^h against R_T + gamma_h max Q^h_tot(next | phi). Gradient reaches theta only.
  Tensor value_loss(const EpisodeBatch& batch) const;
  // V^h against R_T + gamma_h V^h_tot(next), the bootstrap held constant.
  Tensor value_loss_onpolicy(const EpisodeBatch& batch) const;
  // Q^h_tot(u^h_T | phi) against R_T + gamma_h max Q^h_tot(next | phi^-).
  Tensor macro_q_loss(const EpisodeBatch& batch) const;
  // Q^l_tot(u^l_t | psi) against r_t + gamma_l max Q^l_tot(next | psi^-).
  Tensor low_q_loss(const EpisodeBatch& batch) const;

  // Per episode, per step r^i = A_h / k from the current theta.
  std::vector<std::vector<double>> intrinsic_rewards(const EpisodeBatch& batch) const;
  // Per episode, per segment A_h from the current theta.
  std::vector<std::vector<double>> advantages(const EpisodeBatch& batch) const;
  // The per-step reward the low level trains on under the configured variant.
  std::vector<std::vector<double>> low_level_rewards(const EpisodeBatch& batch) const;

  // One training iteration: theta then phi on one B^h, then psi on B^l.
  // Each part is skipped while its buffer is not ready.
  UpdateLosses update(const ReplayMemory& memory, Rng& rng);
  UpdateLosses update_on(const std::optional<EpisodeBatch>& high_batch,
                         const std::optional<EpisodeBatch>& low_batch);

  void refresh_targets() { policy_->refresh_targets(); }
  const TrainConfig& config() const { return config_; }

private:
  double step(RmsProp& optimizer, const Tensor& loss, const char* what);

  TrainConfig config_;
  HierarchicalPolicy* policy_;
  std::optional<RmsProp> value_opt_;
  std::optional<RmsProp> macro_opt_;
  RmsProp low_opt_;
};

// Rolls out one episode with epsilon-greedy two-level control. Macro actions
// are stored per segment; rewards are external only.
EpisodeRecord run_episode(const HierarchicalPolicy& policy, Environment& env, std::size_t k,
                          std::uint64_t env_seed, double epsilon, Rng& rng);

struct EvalResult {
  double return_mean = 0.0;
  double success_rate = 0.0;
};

struct MetricRow {
  std::size_t env_step = 0;
  std::size_t episode = 0;
  double epsilon = 0.0;
  // NaN when no update of that kind happened since the previous row.
  double loss_v = 0.0;
  double loss_qh = 0.0;
  double loss_ql = 0.0;
  double train_return = 0.0;
  double eval_return_mean = 0.0;
  double eval_success_rate = 0.0;
  double wall_ms = 0.0;
};

class Trainer {
public:
  explicit Trainer(TrainConfig config);

  using RowCallback = std::function<void(const MetricRow&)>;
  using CheckpointCallback = std::function<void(std::size_t env_step, const HierarchicalPolicy&)>;

  // Runs to total_env_steps. Evaluates (and checkpoints) at step 0, every
  // eval_interval steps and at the end. Throws DivergenceError on a
  // non-finite loss or gradient.
  void run(const RowCallback& on_row = {}, const CheckpointCallback& on_checkpoint = {});

  EvalResult evaluate() const;

  const TrainConfig& config() const { return config_; }
  const EnvSpec& env_spec() const { return env_->spec(); }
  HierarchicalPolicy& policy() { return policy_; }
  const HierarchicalPolicy& policy() const { return policy_; }
  const ReplayMemory& memory() const { return memory_; }
  Learner& learner() { return learner_; }
  std::size_t env_steps() const { return env_steps_; }
  std::size_t episodes() const { return episodes_; }

private:
  TrainConfig config_;
  std::unique_ptr<Environment> env_;
  HierarchicalPolicy policy_;
  Learner learner_;
  ReplayMemory memory_;
  Rng explore_rng_;
  Rng sample_rng_;
  std::size_t env_steps_ = 0;
  std::size_t episodes_ = 0;
};

}  // namespace haven
