#pragma once

// Agent networks and value-decomposition mixers.

#include "haven/tensor.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace haven {

using Rng = std::mt19937_64;

struct Linear {
  Tensor weight;  // (in, out)
  Tensor bias;    // (1, out)

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// Gated recurrent unit:
//   r = sigmoid(x Wr + h Ur), u = sigmoid(x Wu + h Uu)
//   n = tanh(x Wn + r * (h Un)),  h' = n + u * (h - n)
struct GruCell {
  Tensor w_input;   // (in, 3H)
  Tensor b_input;   // (1, 3H)
  Tensor w_hidden;  // (H, 3H)
  Tensor b_hidden;  // (1, 3H)
  std::size_t hidden_dim = 0;

  GruCell() = default;
  GruCell(std::size_t in, std::size_t hidden, Rng& rng);
  Tensor forward(const Tensor& x, const Tensor& h) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// DRQN-style agent network: dense -> ReLU -> GRU -> dense. One set of
// parameters is shared by all agents of a level; rows are (episode, agent).
class RecurrentAgentNet {
public:
  struct Output {
    Tensor scores;  // (rows, output_dim)
    Tensor hidden;  // (rows, hidden_dim)
  };

  RecurrentAgentNet() = default;
  RecurrentAgentNet(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim,
                    Rng& rng);

  Output forward(const Tensor& input, const Tensor& hidden) const;
  Tensor initial_hidden(std::size_t rows) const;

  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden_dim() const { return hidden_dim_; }
  std::size_t output_dim() const { return output_dim_; }

  std::vector<NamedTensor> parameters(const std::string& prefix) const;

private:
  std::size_t input_dim_ = 0;
  std::size_t hidden_dim_ = 0;
  std::size_t output_dim_ = 0;
  Linear in_;
  GruCell cell_;
  Linear out_;
};

enum class MixerKind { kVdn, kQmix };

MixerKind parse_mixer_kind(const std::string& name);
std::string to_string(MixerKind kind);

// Hypernetwork outputs for one batch of states.
struct HypernetOutputs {
  Tensor w1;  // (B, n * E), before abs
  Tensor b1;  // (B, E)
  Tensor w2;  // (B, E), before abs
  Tensor b2;  // (B, 1)
};

// elu(q |W1| + b1) |w2| + b2, row by row. Nonnegative weights make the
// output monotone non-decreasing in every agent value.
Tensor monotonic_mix(const Tensor& agent_values, const HypernetOutputs& h);

// QMIX-style state-conditioned monotonic mixer.
class MonotonicMixer {
public:
  MonotonicMixer() = default;
  MonotonicMixer(std::size_t n_agents, std::size_t state_dim, std::size_t embed_dim,
                 std::size_t hypernet_hidden, Rng& rng);

  HypernetOutputs hypernet(const Tensor& states) const;
  Tensor forward(const Tensor& agent_values, const Tensor& states) const;
  std::vector<NamedTensor> parameters(const std::string& prefix) const;

  std::size_t embed_dim() const { return embed_dim_; }

private:
  std::size_t n_agents_ = 0;
  std::size_t embed_dim_ = 0;
  Linear w1_hidden_, w1_out_;
  Linear b1_;
  Linear w2_hidden_, w2_out_;
  Linear b2_hidden_, b2_out_;
};

// VDN sum or QMIX monotonic network over n agent values.
class Mixer {
public:
  struct Options {
    std::size_t embed_dim = 32;
    std::size_t hypernet_hidden = 64;
  };

  Mixer() = default;
  Mixer(MixerKind kind, std::size_t n_agents, std::size_t state_dim, Options options, Rng& rng);

  // agent_values (B, n), states (B, state_dim) -> (B, 1)
  Tensor forward(const Tensor& agent_values, const Tensor& states) const;
  double mix(std::span<const double> agent_values, std::span<const double> state) const;

  MixerKind kind() const { return kind_; }
  std::size_t n_agents() const { return n_agents_; }
  std::size_t state_dim() const { return state_dim_; }
  std::vector<NamedTensor> parameters(const std::string& prefix) const;

private:
  MixerKind kind_ = MixerKind::kVdn;
  std::size_t n_agents_ = 0;
  std::size_t state_dim_ = 0;
  std::optional<MonotonicMixer> qmix_;
};

// Lowest index among the maxima.
std::size_t argmax(std::span<const double> values);

struct GreedyJoint {
  std::vector<std::size_t> actions;
  double value = 0.0;
};

// Per-agent argmax, then the mixed value of the per-agent maxima.
GreedyJoint greedy_joint_action(const Mixer& mixer, std::span<const std::vector<double>> scores,
                                std::span<const double> state);

// Exhaustive joint maximisation of mix(scores[a][u_a]) over every joint action.
GreedyJoint brute_force_joint_max(const Mixer& mixer, std::span<const std::vector<double>> scores,
                                  std::span<const double> state);

// Copies values between parameter lists with identical names and shapes.
void copy_parameters(std::span<const NamedTensor> from, std::span<NamedTensor> to);

std::vector<Tensor> tensors_of(std::span<const NamedTensor> named);

}  // namespace haven
