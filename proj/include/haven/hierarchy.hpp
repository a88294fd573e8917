#pragma once

// Two-timescale control: macro actions every k steps, primitive actions
// every step, and the reward plumbing between the two levels.

#include "haven/env.hpp"
#include "haven/policy.hpp"

#include <span>
#include <vector>

namespace haven {

struct MacroClock {
  std::size_t k = 3;
  std::size_t t = 0;

  std::size_t macro_step() const { return t / k; }
  bool boundary() const { return t % k == 0; }
};

// R_T: sum of the external rewards of one macro segment (1..k entries).
double high_level_reward(std::span<const double> segment_rewards);

// A_h = R_T + gamma * V(s_{T+1}) - V(s_T), successor dropped when terminal.
double advantage(double segment_reward, double value, double next_value, bool terminal,
                 double gamma);

// r^i = A_h / k for each of the `length` steps; the divisor stays k for a
// short final segment.
std::vector<double> intrinsic_rewards(double advantage_value, std::size_t length, std::size_t k);

// 1 + (1 - gamma^k) / (k (1 - gamma)).
double monotonic_coefficient(double gamma, std::size_t k);

// Per-agent epsilon-greedy: uniform with probability epsilon, otherwise the
// lowest-index argmax.
int epsilon_greedy(std::span<const double> scores, double epsilon, Rng& rng);

struct ActResult {
  std::vector<int> primitive;
  // Filled only on a macro boundary.
  std::vector<int> macro;
};

// Decentralised execution of a HierarchicalPolicy for one episode. Holds the
// recurrent hidden states of the macro and low-level agent nets.
class Controller {
public:
  Controller(const HierarchicalPolicy& policy, std::size_t k);

  void reset();
  ActResult act(const Observations& observations, double epsilon, Rng& rng);

  const MacroClock& clock() const { return clock_; }
  const std::vector<int>& current_macro() const { return macro_; }

private:
  const HierarchicalPolicy* policy_;
  MacroClock clock_;
  Tensor macro_hidden_;
  Tensor low_hidden_;
  std::vector<int> macro_;
  std::vector<int> prev_macro_;
  std::vector<int> prev_action_;
};

}  // namespace haven
