#include "haven/hierarchy.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace haven {

double high_level_reward(std::span<const double> segment_rewards) {
  if (segment_rewards.empty()) throw std::invalid_argument("high_level_reward: empty segment");
  return std::accumulate(segment_rewards.begin(), segment_rewards.end(), 0.0);
}

double advantage(double segment_reward, double value, double next_value, bool terminal,
                 double gamma) {
  return segment_reward + (terminal ? 0.0 : gamma * next_value) - value;
}

std::vector<double> intrinsic_rewards(double advantage_value, std::size_t length, std::size_t k) {
  if (k == 0 || length == 0 || length > k) {
    throw std::invalid_argument("intrinsic_rewards: segment length " + std::to_string(length) +
                                " outside [1, " + std::to_string(k) + "]");
  }
  return std::vector<double>(length, advantage_value / static_cast<double>(k));
}

double monotonic_coefficient(double gamma, std::size_t k) {
  if (!(gamma > 0.0 && gamma < 1.0) || k == 0) {
    throw std::invalid_argument("monotonic_coefficient: need gamma in (0,1) and k >= 1");
  }
  const double kd = static_cast<double>(k);
  return 1.0 + (1.0 - std::pow(gamma, kd)) / (kd * (1.0 - gamma));
}

int epsilon_greedy(std::span<const double> scores, double epsilon, Rng& rng) {
  if (epsilon < 0.0 || epsilon > 1.0) {
    throw std::invalid_argument("epsilon_greedy: epsilon outside [0, 1]");
  }
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (epsilon > 0.0 && coin(rng) < epsilon) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(scores.size()) - 1);
    return pick(rng);
  }
  return static_cast<int>(argmax(scores));
}

Controller::Controller(const HierarchicalPolicy& policy, std::size_t k) : policy_(&policy) {
  if (k == 0) throw std::invalid_argument("Controller: k must be positive");
  clock_.k = k;
  reset();
}

void Controller::reset() {
  const std::size_t n = policy_->dims().n_agents;
  clock_.t = 0;
  if (policy_->hierarchical()) macro_hidden_ = policy_->macro().agent.initial_hidden(n);
  low_hidden_ = policy_->low().agent.initial_hidden(n);
  macro_.assign(n, -1);
  prev_macro_.assign(n, -1);
  prev_action_.assign(n, -1);
}

ActResult Controller::act(const Observations& observations, double epsilon, Rng& rng) {
  NoGradGuard guard;
  const PolicyDims& dims = policy_->dims();
  const std::size_t n = dims.n_agents;
  if (observations.size() != n) {
    throw ShapeError("Controller::act: " + std::to_string(observations.size()) +
                     " observations for " + std::to_string(n) + " agents");
  }
  ActResult result;

  if (policy_->hierarchical() && clock_.boundary()) {
    std::vector<double> rows;
    for (std::size_t a = 0; a < n; ++a) {
      append_macro_input(rows, observations[a], prev_macro_[a], a, dims);
    }
    auto out = policy_->macro().agent.forward(
        Tensor::matrix(n, policy_->macro_input_dim(), std::move(rows)), macro_hidden_);
    macro_hidden_ = out.hidden;
    const auto scores = out.scores.values();
    const std::size_t N = dims.n_macro_actions;
    for (std::size_t a = 0; a < n; ++a) {
      macro_[a] = epsilon_greedy(scores.subspan(a * N, N), epsilon, rng);
    }
    prev_macro_ = macro_;
    result.macro = macro_;
  }

  std::vector<double> rows;
  for (std::size_t a = 0; a < n; ++a) {
    append_low_input(rows, observations[a], macro_[a], prev_action_[a], a, dims);
  }
  auto out = policy_->low().agent.forward(
      Tensor::matrix(n, policy_->low_input_dim(), std::move(rows)), low_hidden_);
  low_hidden_ = out.hidden;
  const auto scores = out.scores.values();
  const std::size_t A = dims.n_actions;
  result.primitive.resize(n);
  for (std::size_t a = 0; a < n; ++a) {
    result.primitive[a] = epsilon_greedy(scores.subspan(a * A, A), epsilon, rng);
  }
  prev_action_ = result.primitive;
  ++clock_.t;
  return result;
}

}  // namespace haven
