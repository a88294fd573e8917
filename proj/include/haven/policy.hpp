#pragma once

// The full set of networks of the two-level architecture:
//   macro agent net + macro mixer        (high-level action values, phi)
//   value agent net + value mixer        (high-level state values, theta)
//   low-level agent net + low mixer      (primitive action values, psi)
// plus frozen target copies of the macro and low-level Q networks. The
// value network has no target copy.

#include "haven/checkpoint.hpp"
#include "haven/nets.hpp"

#include <optional>
#include <span>

namespace haven {

struct PolicyDims {
  std::size_t n_agents = 1;
  std::size_t obs_dim = 1;
  std::size_t state_dim = 1;
  std::size_t n_actions = 1;
  // 0 builds a flat (single-level) policy.
  std::size_t n_macro_actions = 8;
  std::size_t hidden_dim = 64;
  MixerKind mixer = MixerKind::kQmix;
  Mixer::Options mixer_options;
};

struct AgentLevel {
  RecurrentAgentNet agent;
  Mixer mixer;

  std::vector<NamedTensor> parameters(const std::string& prefix) const;
};

class HierarchicalPolicy {
public:
  HierarchicalPolicy(PolicyDims dims, std::uint64_t seed);

  const PolicyDims& dims() const { return dims_; }
  bool hierarchical() const { return dims_.n_macro_actions > 0; }

  // Macro/value input: [z, one-hot previous macro action, one-hot agent id].
  std::size_t macro_input_dim() const;
  // Low input: [z, one-hot macro action (hierarchical only), one-hot
  // previous primitive action, one-hot agent id].
  std::size_t low_input_dim() const;

  const AgentLevel& macro() const { return *macro_; }
  const AgentLevel& macro_target() const { return *macro_target_; }
  const AgentLevel& value() const { return *value_; }
  const AgentLevel& low() const { return low_; }
  const AgentLevel& low_target() const { return low_target_; }

  std::vector<NamedTensor> value_parameters() const;   // theta
  std::vector<NamedTensor> macro_parameters() const;   // phi
  std::vector<NamedTensor> low_parameters() const;     // psi
  std::vector<NamedTensor> macro_target_parameters() const;
  std::vector<NamedTensor> low_target_parameters() const;
  std::vector<NamedTensor> all_parameters() const;

  void refresh_targets();

  Checkpoint to_checkpoint() const;
  static HierarchicalPolicy from_checkpoint(const Checkpoint& checkpoint);
  HierarchicalPolicy clone() const;

private:
  PolicyDims dims_;
  std::optional<AgentLevel> macro_;
  std::optional<AgentLevel> macro_target_;
  std::optional<AgentLevel> value_;
  AgentLevel low_;
  AgentLevel low_target_;
};

// Row builders; a negative action index means "none" and leaves the
// one-hot block zero.
void append_macro_input(std::vector<double>& row, std::span<const double> obs, int prev_macro,
                        std::size_t agent, const PolicyDims& dims);
void append_low_input(std::vector<double>& row, std::span<const double> obs, int macro,
                      int prev_action, std::size_t agent, const PolicyDims& dims);

}  // namespace haven
