#include "haven/learner.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace haven {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// A batch unrolled over P time points. Row (T, b) of the per-point tables
// is T * B + b; agent rows inside one point are b * n + a.
struct Sequence {
  std::size_t B = 0;
  std::size_t P = 0;
  std::size_t n = 0;
  std::vector<Tensor> inputs;        // P tensors of (B * n, input_dim)
  Tensor states;                     // (P * B, state_dim)
  std::vector<std::size_t> actions;  // P * B * n; 0 where nothing was taken
  std::vector<double> rewards;       // P * B
  std::vector<double> terminal;      // P * B
  std::vector<double> mask;          // P * B
};

const std::vector<double>& zeros_like(std::size_t size) {
  thread_local std::vector<double> z;
  z.assign(size, 0.0);
  return z;
}

// High level: points T = 0 .. nT - 1 plus the successor point nT at s_L.
Sequence build_high(const EpisodeBatch& batch, const HierarchicalPolicy& policy) {
  const PolicyDims& d = policy.dims();
  Sequence seq;
  seq.B = batch.size();
  seq.n = d.n_agents;
  seq.P = batch.max_segments() + 1;
  const std::size_t B = seq.B, n = seq.n, P = seq.P;
  seq.actions.assign(P * B * n, 0);
  seq.rewards.assign(P * B, 0.0);
  seq.terminal.assign(P * B, 0.0);
  seq.mask.assign(P * B, 0.0);
  std::vector<double> states;
  states.reserve(P * B * d.state_dim);
  for (std::size_t T = 0; T < P; ++T) {
    std::vector<double> rows;
    rows.reserve(B * n * policy.macro_input_dim());
    for (std::size_t b = 0; b < B; ++b) {
      const EpisodeRecord& ep = *batch.episodes[b];
      const std::size_t nT = ep.num_segments();
      const std::size_t L = ep.length();
      const std::size_t r = T * B + b;
      const bool real = T < nT;
      const bool successor = T == nT && !ep.terminated;
      const std::size_t t = real ? T * ep.k : L;
      if (real || successor) {
        states.insert(states.end(), ep.states[t].begin(), ep.states[t].end());
      } else {
        states.resize(states.size() + d.state_dim, 0.0);
      }
      for (std::size_t a = 0; a < n; ++a) {
        const int prev = (T > 0 && T <= nT) ? ep.macro_actions[T - 1][a] : -1;
        if (real || successor) {
          append_macro_input(rows, ep.observations[t][a], prev, a, d);
        } else {
          append_macro_input(rows, zeros_like(d.obs_dim), prev, a, d);
        }
        if (real) seq.actions[r * n + a] = static_cast<std::size_t>(ep.macro_actions[T][a]);
      }
      if (real) {
        seq.rewards[r] = ep.segment_reward(T);
        seq.terminal[r] = (ep.terminated && T + 1 == nT) ? 1.0 : 0.0;
        seq.mask[r] = 1.0;
      }
    }
    seq.inputs.push_back(Tensor::matrix(B * n, policy.macro_input_dim(), std::move(rows)));
  }
  seq.states = Tensor::matrix(P * B, d.state_dim, std::move(states));
  return seq;
}

// Low level: points t = 0 .. L - 1 plus the successor point L. The successor
// is conditioned on the macro action of segment floor(L / k); when a
// truncated episode ends exactly on a boundary that action was never drawn,
// so the final transition is dropped from the loss.
Sequence build_low(const EpisodeBatch& batch, const HierarchicalPolicy& policy) {
  const PolicyDims& d = policy.dims();
  const bool hier = policy.hierarchical();
  Sequence seq;
  seq.B = batch.size();
  seq.n = d.n_agents;
  seq.P = batch.max_length() + 1;
  const std::size_t B = seq.B, n = seq.n, P = seq.P;
  seq.actions.assign(P * B * n, 0);
  seq.rewards.assign(P * B, 0.0);
  seq.terminal.assign(P * B, 0.0);
  seq.mask.assign(P * B, 0.0);
  std::vector<double> states;
  states.reserve(P * B * d.state_dim);
  for (std::size_t t = 0; t < P; ++t) {
    std::vector<double> rows;
    rows.reserve(B * n * policy.low_input_dim());
    for (std::size_t b = 0; b < B; ++b) {
      const EpisodeRecord& ep = *batch.episodes[b];
      const std::size_t L = ep.length();
      const std::size_t r = t * B + b;
      const bool real = t < L;
      const bool successor = t == L && !ep.terminated;
      if (real || successor) {
        states.insert(states.end(), ep.states[t].begin(), ep.states[t].end());
      } else {
        states.resize(states.size() + d.state_dim, 0.0);
      }
      const std::size_t segment = std::min(t / ep.k, ep.num_segments() - 1);
      for (std::size_t a = 0; a < n; ++a) {
        const int macro = (hier && t <= L) ? ep.macro_actions[segment][a] : -1;
        const int prev = (t > 0 && t <= L) ? ep.actions[t - 1][a] : -1;
        if (real || successor) {
          append_low_input(rows, ep.observations[t][a], macro, prev, a, d);
        } else {
          append_low_input(rows, zeros_like(d.obs_dim), macro, prev, a, d);
        }
        if (real) seq.actions[r * n + a] = static_cast<std::size_t>(ep.actions[t][a]);
      }
      if (real) {
        const bool last = t + 1 == L;
        seq.terminal[r] = (ep.terminated && last) ? 1.0 : 0.0;
        const bool unbootstrappable = hier && last && ep.truncated && L % ep.k == 0;
        seq.mask[r] = unbootstrappable ? 0.0 : 1.0;
      }
    }
    seq.inputs.push_back(Tensor::matrix(B * n, policy.low_input_dim(), std::move(rows)));
  }
  seq.states = Tensor::matrix(P * B, d.state_dim, std::move(states));
  return seq;
}

// Agent-net scores for every point -> (P * B * n, output_dim).
Tensor unroll(const RecurrentAgentNet& net, const Sequence& seq) {
  Tensor h = net.initial_hidden(seq.B * seq.n);
  std::vector<Tensor> outs;
  outs.reserve(seq.P);
  for (const Tensor& x : seq.inputs) {
    auto o = net.forward(x, h);
    h = o.hidden;
    outs.push_back(o.scores);
  }
  return concat_rows(outs);
}

Tensor chosen_total(const AgentLevel& level, const Tensor& scores, const Sequence& seq) {
  const Tensor chosen = reshape(gather(scores, seq.actions), seq.P * seq.B, seq.n);
  return level.mixer.forward(chosen, seq.states);
}

// max over joint actions of Q_tot, via per-agent maxima (IGM).
std::vector<double> max_total(const AgentLevel& level, const Sequence& seq) {
  NoGradGuard guard;
  const Tensor scores = unroll(level.agent, seq);
  const Tensor best = reshape(max_last(scores), seq.P * seq.B, seq.n);
  const Tensor total = level.mixer.forward(best, seq.states);
  return {total.values().begin(), total.values().end()};
}

// Targets for rows T < P - 1 from next-point values; the last point only
// serves as a successor and is masked out of every loss.
Tensor td_targets(const Sequence& seq, std::span<const double> next_values, double gamma) {
  std::vector<double> targets(seq.P * seq.B, 0.0);
  for (std::size_t T = 0; T + 1 < seq.P; ++T) {
    for (std::size_t b = 0; b < seq.B; ++b) {
      const std::size_t r = T * seq.B + b;
      targets[r] = bootstrap_target(seq.rewards[r], next_values[r + seq.B], seq.terminal[r] > 0.5,
                                    gamma);
    }
  }
  return Tensor::matrix(seq.P * seq.B, 1, std::move(targets));
}

Tensor mask_tensor(const Sequence& seq) { return Tensor::matrix(seq.P * seq.B, 1, seq.mask); }

void require_hierarchical(const HierarchicalPolicy& policy, const char* what) {
  if (!policy.hierarchical()) {
    throw std::logic_error(std::string(what) + " needs a hierarchical policy");
  }
}

}  // namespace

double bootstrap_target(double reward, double next_value, bool terminal, double gamma) {
  return terminal ? reward : reward + gamma * next_value;
}

PolicyDims policy_dims(const TrainConfig& config, const EnvSpec& spec) {
  PolicyDims d;
  d.n_agents = spec.n_agents;
  d.obs_dim = spec.obs_dim;
  d.state_dim = spec.state_dim;
  d.n_actions = spec.n_primitive_actions;
  d.n_macro_actions = config.hierarchical() ? config.n_macro_actions : 0;
  d.hidden_dim = config.hidden_dim;
  d.mixer = config.mixer;
  d.mixer_options.embed_dim = config.mixer_embed_dim;
  d.mixer_options.hypernet_hidden = config.hypernet_hidden_dim;
  return d;
}

Learner::Learner(const TrainConfig& config, HierarchicalPolicy& policy)
    : config_(config),
      policy_(&policy),
      low_opt_(tensors_of(policy.low_parameters()),
               RmsPropOptions{config.lr, config.rms_alpha, config.rms_eps}) {
  const RmsPropOptions options{config.lr, config.rms_alpha, config.rms_eps};
  if (policy.hierarchical()) {
    value_opt_.emplace(tensors_of(policy.value_parameters()), options);
    macro_opt_.emplace(tensors_of(policy.macro_parameters()), options);
  }
}

Tensor Learner::value_loss(const EpisodeBatch& batch) const {
  require_hierarchical(*policy_, "value_loss");
  const Sequence seq = build_high(batch, *policy_);
  const AgentLevel& bootstrap =
      config_.value_target_uses_target_net ? policy_->macro_target() : policy_->macro();
  const Tensor targets = td_targets(seq, max_total(bootstrap, seq), config_.gamma_h);
  const AgentLevel& value = policy_->value();
  const Tensor v = reshape(unroll(value.agent, seq), seq.P * seq.B, seq.n);
  return masked_mse(value.mixer.forward(v, seq.states), targets, mask_tensor(seq));
}

Tensor Learner::value_loss_onpolicy(const EpisodeBatch& batch) const {
  require_hierarchical(*policy_, "value_loss_onpolicy");
  const Sequence seq = build_high(batch, *policy_);
  const AgentLevel& value = policy_->value();
  const Tensor v = reshape(unroll(value.agent, seq), seq.P * seq.B, seq.n);
  const Tensor v_tot = value.mixer.forward(v, seq.states);
  const Tensor targets = td_targets(seq, v_tot.values(), config_.gamma_h);
  return masked_mse(v_tot, targets, mask_tensor(seq));
}

Tensor Learner::macro_q_loss(const EpisodeBatch& batch) const {
  require_hierarchical(*policy_, "macro_q_loss");
  const Sequence seq = build_high(batch, *policy_);
  const Tensor targets = td_targets(seq, max_total(policy_->macro_target(), seq), config_.gamma_h);
  const AgentLevel& macro = policy_->macro();
  const Tensor q = chosen_total(macro, unroll(macro.agent, seq), seq);
  return masked_mse(q, targets, mask_tensor(seq));
}

std::vector<std::vector<double>> Learner::advantages(const EpisodeBatch& batch) const {
  require_hierarchical(*policy_, "advantages");
  NoGradGuard guard;
  const Sequence seq = build_high(batch, *policy_);
  const AgentLevel& value = policy_->value();
  const Tensor v = reshape(unroll(value.agent, seq), seq.P * seq.B, seq.n);
  const Tensor v_tot = value.mixer.forward(v, seq.states);
  const auto values = v_tot.values();
  std::vector<std::vector<double>> out(seq.B);
  for (std::size_t b = 0; b < seq.B; ++b) {
    const std::size_t nT = batch.episodes[b]->num_segments();
    for (std::size_t T = 0; T < nT; ++T) {
      const std::size_t r = T * seq.B + b;
      out[b].push_back(advantage(seq.rewards[r], values[r], values[r + seq.B],
                                 seq.terminal[r] > 0.5, config_.gamma_h));
    }
  }
  return out;
}

std::vector<std::vector<double>> Learner::intrinsic_rewards(const EpisodeBatch& batch) const {
  const auto adv = advantages(batch);
  std::vector<std::vector<double>> out(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const EpisodeRecord& ep = *batch.episodes[b];
    for (std::size_t T = 0; T < adv[b].size(); ++T) {
      const std::size_t len = std::min(ep.k, ep.length() - T * ep.k);
      const auto r = haven::intrinsic_rewards(adv[b][T], len, ep.k);
      out[b].insert(out[b].end(), r.begin(), r.end());
    }
  }
  return out;
}

std::vector<std::vector<double>> Learner::low_level_rewards(const EpisodeBatch& batch) const {
  std::vector<std::vector<double>> out(batch.size());
  const bool use_external = config_.variant != Variant::kHavenI;
  const bool use_intrinsic =
      config_.variant != Variant::kHavenE && config_.variant != Variant::kFlat;
  std::vector<std::vector<double>> intrinsic;
  if (use_intrinsic) intrinsic = intrinsic_rewards(batch);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const EpisodeRecord& ep = *batch.episodes[b];
    out[b].assign(ep.length(), 0.0);
    for (std::size_t t = 0; t < ep.length(); ++t) {
      if (use_external) out[b][t] += ep.rewards[t];
      if (use_intrinsic) out[b][t] += intrinsic[b][t];
    }
  }
  return out;
}

Tensor Learner::low_q_loss(const EpisodeBatch& batch) const {
  Sequence seq = build_low(batch, *policy_);
  const auto rewards = low_level_rewards(batch);
  for (std::size_t b = 0; b < seq.B; ++b) {
    for (std::size_t t = 0; t < rewards[b].size(); ++t) seq.rewards[t * seq.B + b] = rewards[b][t];
  }
  const Tensor targets = td_targets(seq, max_total(policy_->low_target(), seq), config_.gamma_l);
  const AgentLevel& low = policy_->low();
  const Tensor q = chosen_total(low, unroll(low.agent, seq), seq);
  return masked_mse(q, targets, mask_tensor(seq));
}

double Learner::step(RmsProp& optimizer, const Tensor& loss, const char* what) {
  const double value = loss.item();
  if (!std::isfinite(value)) throw DivergenceError(std::string(what) + " loss is not finite");
  loss.backward();
  optimizer.step(config_.grad_clip);
  return value;
}

UpdateLosses Learner::update_on(const std::optional<EpisodeBatch>& high_batch,
                                const std::optional<EpisodeBatch>& low_batch) {
  UpdateLosses out;
  if (high_batch && policy_->hierarchical()) {
    const Tensor lv = config_.variant == Variant::kHavenB ? value_loss_onpolicy(*high_batch)
                                                          : value_loss(*high_batch);
    out.value = step(*value_opt_, lv, "value");
    out.macro = step(*macro_opt_, macro_q_loss(*high_batch), "macro Q");
  }
  if (low_batch) out.low = step(low_opt_, low_q_loss(*low_batch), "low-level Q");
  return out;
}

UpdateLosses Learner::update(const ReplayMemory& memory, Rng& rng) {
  std::optional<EpisodeBatch> high;
  std::optional<EpisodeBatch> low;
  if (policy_->hierarchical() && memory.high().ready(config_.batch_size)) {
    high = memory.high().sample(config_.batch_size, rng);
  }
  if (memory.low().ready(config_.batch_size)) low = memory.low().sample(config_.batch_size, rng);
  return update_on(high, low);
}

EpisodeRecord run_episode(const HierarchicalPolicy& policy, Environment& env, std::size_t k,
                          std::uint64_t env_seed, double epsilon, Rng& rng) {
  Controller controller(policy, k);
  EpisodeRecord rec;
  rec.k = k;
  ResetResult start = env.reset(env_seed);
  rec.states.push_back(std::move(start.state));
  rec.observations.push_back(std::move(start.observations));
  while (true) {
    ActResult act = controller.act(rec.observations.back(), epsilon, rng);
    if (!act.macro.empty()) rec.macro_actions.push_back(std::move(act.macro));
    StepResult sr = env.step(act.primitive);
    rec.actions.push_back(std::move(act.primitive));
    rec.rewards.push_back(sr.reward);
    rec.states.push_back(std::move(sr.next_state));
    rec.observations.push_back(std::move(sr.next_observations));
    if (sr.terminated) {
      rec.truncated = sr.truncated;
      rec.terminated = !sr.truncated;
      rec.success = sr.info["success"];
      break;
    }
  }
  return rec;
}

Trainer::Trainer(TrainConfig config)
    : config_(std::move(config)),
      env_(make_environment(config_.env_id, config_.env_params)),
      policy_(policy_dims(config_, env_->spec()), derive_seed(config_.seed, seed_stream::kPolicy)),
      learner_(config_, policy_),
      memory_(config_.buffer_capacity),
      explore_rng_(derive_seed(config_.seed, seed_stream::kExplore)),
      sample_rng_(derive_seed(config_.seed, seed_stream::kSample)) {
  if (config_.k == 0) throw std::invalid_argument("k must be positive");
  if (config_.hierarchical() && config_.n_macro_actions == 0) {
    throw std::invalid_argument("n_macro_actions must be positive");
  }
  if (config_.batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (config_.eval_interval == 0) throw std::invalid_argument("eval_interval must be positive");
  if (config_.target_update_episodes == 0) {
    throw std::invalid_argument("target_update_episodes must be positive");
  }
  if (config_.epsilon_anneal_steps == 0) {
    throw std::invalid_argument("epsilon_anneal_steps must be positive");
  }
}

EvalResult Trainer::evaluate() const {
  EvalResult out;
  if (config_.eval_episodes == 0) return out;
  auto env = make_environment(config_.env_id, config_.env_params);
  Rng rng(0);
  for (std::size_t i = 0; i < config_.eval_episodes; ++i) {
    const EpisodeRecord rec =
        run_episode(policy_, *env, config_.k, derive_seed(config_.seed, seed_stream::kEvalEnv, i), 0.0,
                    rng);
    out.return_mean += rec.total_reward();
    out.success_rate += rec.success;
  }
  out.return_mean /= static_cast<double>(config_.eval_episodes);
  out.success_rate /= static_cast<double>(config_.eval_episodes);
  return out;
}

void Trainer::run(const RowCallback& on_row, const CheckpointCallback& on_checkpoint) {
  const auto start = std::chrono::steady_clock::now();
  struct Mean {
    double sum = 0.0;
    std::size_t count = 0;
    void add(double v) { sum += v, ++count; }
    double get() const { return count ? sum / static_cast<double>(count) : kNaN; }
  };
  Mean loss_v, loss_qh, loss_ql, train_return;
  std::optional<std::size_t> last_row_step;

  auto emit = [&] {
    const EvalResult eval = evaluate();
    MetricRow row;
    row.env_step = env_steps_;
    row.episode = episodes_;
    row.epsilon = epsilon(env_steps_, config_);
    row.loss_v = loss_v.get();
    row.loss_qh = loss_qh.get();
    row.loss_ql = loss_ql.get();
    row.train_return = train_return.get();
    row.eval_return_mean = eval.return_mean;
    row.eval_success_rate = eval.success_rate;
    if (config_.record_wall_time) {
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                              start)
                        .count();
    }
    loss_v = loss_qh = loss_ql = train_return = Mean{};
    last_row_step = env_steps_;
    if (on_row) on_row(row);
    if (on_checkpoint) on_checkpoint(env_steps_, policy_);
  };

  std::size_t next_eval = env_steps_;
  while (env_steps_ < config_.total_env_steps) {
    if (env_steps_ >= next_eval) {
      emit();
      while (next_eval <= env_steps_) next_eval += config_.eval_interval;
    }
    const double eps = epsilon(env_steps_, config_);
    EpisodeRecord rec =
        run_episode(policy_, *env_, config_.k, derive_seed(config_.seed, seed_stream::kTrainEnv, episodes_),
                    eps, explore_rng_);
    env_steps_ += rec.length();
    ++episodes_;
    train_return.add(rec.total_reward());
    memory_.push(std::move(rec));

    const UpdateLosses losses = learner_.update(memory_, sample_rng_);
    if (losses.value) loss_v.add(*losses.value);
    if (losses.macro) loss_qh.add(*losses.macro);
    if (losses.low) loss_ql.add(*losses.low);

    if (episodes_ % config_.target_update_episodes == 0) learner_.refresh_targets();
  }
  if (!last_row_step || *last_row_step != env_steps_) emit();
}

}  // namespace haven
