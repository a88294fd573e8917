#include "haven/nets.hpp"

#include <cmath>
#include <stdexcept>

namespace haven {

namespace {

Tensor uniform_param(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = dist(rng);
  return Tensor::matrix(rows, cols, std::move(v), true);
}

}  // namespace

Linear::Linear(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = uniform_param(in, out, bound, rng);
  bias = uniform_param(1, out, bound, rng);
}

Tensor Linear::forward(const Tensor& x) const { return add(matmul(x, weight), bias); }

void Linear::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

GruCell::GruCell(std::size_t in, std::size_t hidden, Rng& rng) : hidden_dim(hidden) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  w_input = uniform_param(in, 3 * hidden, bound, rng);
  b_input = uniform_param(1, 3 * hidden, bound, rng);
  w_hidden = uniform_param(hidden, 3 * hidden, bound, rng);
  b_hidden = uniform_param(1, 3 * hidden, bound, rng);
}

Tensor GruCell::forward(const Tensor& x, const Tensor& h) const {
  const std::size_t H = hidden_dim;
  const Tensor gi = add(matmul(x, w_input), b_input);
  const Tensor gh = add(matmul(h, w_hidden), b_hidden);
  const Tensor reset = sigmoid(add(slice_cols(gi, 0, H), slice_cols(gh, 0, H)));
  const Tensor update = sigmoid(add(slice_cols(gi, H, H), slice_cols(gh, H, H)));
  const Tensor candidate = tanh(add(slice_cols(gi, 2 * H, H), mul(reset, slice_cols(gh, 2 * H, H))));
  return add(candidate, mul(update, sub(h, candidate)));
}

void GruCell::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".w_input", w_input});
  out.push_back({prefix + ".b_input", b_input});
  out.push_back({prefix + ".w_hidden", w_hidden});
  out.push_back({prefix + ".b_hidden", b_hidden});
}

RecurrentAgentNet::RecurrentAgentNet(std::size_t input_dim, std::size_t hidden_dim,
                                     std::size_t output_dim, Rng& rng)
    : input_dim_(input_dim),
      hidden_dim_(hidden_dim),
      output_dim_(output_dim),
      in_(input_dim, hidden_dim, rng),
      cell_(hidden_dim, hidden_dim, rng),
      out_(hidden_dim, output_dim, rng) {}

RecurrentAgentNet::Output RecurrentAgentNet::forward(const Tensor& input,
                                                     const Tensor& hidden) const {
  if (input.shape().size() != 2 || input.cols() != input_dim_) {
    throw ShapeError("agent_forward: input " + to_string(input.shape()) + " vs expected (*, " +
                     std::to_string(input_dim_) + ")");
  }
  if (hidden.rows() != input.rows() || hidden.cols() != hidden_dim_) {
    throw ShapeError("agent_forward: hidden " + to_string(hidden.shape()) + " vs input " +
                     to_string(input.shape()));
  }
  const Tensor x = relu(in_.forward(input));
  Tensor h = cell_.forward(x, hidden);
  Tensor q = out_.forward(h);
  return {std::move(q), std::move(h)};
}

Tensor RecurrentAgentNet::initial_hidden(std::size_t rows) const {
  return Tensor::zeros(rows, hidden_dim_);
}

std::vector<NamedTensor> RecurrentAgentNet::parameters(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  in_.collect(prefix + ".in", out);
  cell_.collect(prefix + ".gru", out);
  out_.collect(prefix + ".out", out);
  return out;
}

MixerKind parse_mixer_kind(const std::string& name) {
  if (name == "vdn" || name == "VDN") return MixerKind::kVdn;
  if (name == "qmix" || name == "QMIX") return MixerKind::kQmix;
  throw std::invalid_argument("unknown mixer '" + name + "' (expected vdn or qmix)");
}

std::string to_string(MixerKind kind) { return kind == MixerKind::kVdn ? "vdn" : "qmix"; }

Tensor monotonic_mix(const Tensor& agent_values, const HypernetOutputs& h) {
  const Tensor hidden = elu(add(batched_vecmat(agent_values, abs(h.w1)), h.b1));
  return add(sum(mul(hidden, abs(h.w2)), 1), h.b2);
}

MonotonicMixer::MonotonicMixer(std::size_t n_agents, std::size_t state_dim, std::size_t embed_dim,
                               std::size_t hypernet_hidden, Rng& rng)
    : n_agents_(n_agents),
      embed_dim_(embed_dim),
      w1_hidden_(state_dim, hypernet_hidden, rng),
      w1_out_(hypernet_hidden, n_agents * embed_dim, rng),
      b1_(state_dim, embed_dim, rng),
      w2_hidden_(state_dim, hypernet_hidden, rng),
      w2_out_(hypernet_hidden, embed_dim, rng),
      b2_hidden_(state_dim, embed_dim, rng),
      b2_out_(embed_dim, 1, rng) {}

HypernetOutputs MonotonicMixer::hypernet(const Tensor& states) const {
  return {
      w1_out_.forward(relu(w1_hidden_.forward(states))),
      b1_.forward(states),
      w2_out_.forward(relu(w2_hidden_.forward(states))),
      b2_out_.forward(relu(b2_hidden_.forward(states))),
  };
}

Tensor MonotonicMixer::forward(const Tensor& agent_values, const Tensor& states) const {
  return monotonic_mix(agent_values, hypernet(states));
}

std::vector<NamedTensor> MonotonicMixer::parameters(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  w1_hidden_.collect(prefix + ".w1_hidden", out);
  w1_out_.collect(prefix + ".w1_out", out);
  b1_.collect(prefix + ".b1", out);
  w2_hidden_.collect(prefix + ".w2_hidden", out);
  w2_out_.collect(prefix + ".w2_out", out);
  b2_hidden_.collect(prefix + ".b2_hidden", out);
  b2_out_.collect(prefix + ".b2_out", out);
  return out;
}

Mixer::Mixer(MixerKind kind, std::size_t n_agents, std::size_t state_dim, Options options, Rng& rng)
    : kind_(kind), n_agents_(n_agents), state_dim_(state_dim) {
  if (kind == MixerKind::kQmix) {
    qmix_.emplace(n_agents, state_dim, options.embed_dim, options.hypernet_hidden, rng);
  }
}

Tensor Mixer::forward(const Tensor& agent_values, const Tensor& states) const {
  if (agent_values.shape().size() != 2 || agent_values.cols() != n_agents_) {
    throw ShapeError("mix: agent values " + to_string(agent_values.shape()) + " vs n_agents " +
                     std::to_string(n_agents_));
  }
  if (kind_ == MixerKind::kVdn) return sum(agent_values, 1);
  if (states.rows() != agent_values.rows() || states.cols() != state_dim_) {
    throw ShapeError("mix: states " + to_string(states.shape()) + " vs agent values " +
                     to_string(agent_values.shape()));
  }
  return qmix_->forward(agent_values, states);
}

double Mixer::mix(std::span<const double> agent_values, std::span<const double> state) const {
  NoGradGuard guard;
  const Tensor q = Tensor::row({agent_values.begin(), agent_values.end()});
  const Tensor s = Tensor::row({state.begin(), state.end()});
  return forward(q, s).item();
}

std::vector<NamedTensor> Mixer::parameters(const std::string& prefix) const {
  if (!qmix_) return {};
  return qmix_->parameters(prefix);
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax of empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

GreedyJoint greedy_joint_action(const Mixer& mixer, std::span<const std::vector<double>> scores,
                                std::span<const double> state) {
  if (scores.size() != mixer.n_agents()) {
    throw ShapeError("greedy_joint_action: " + std::to_string(scores.size()) +
                     " score vectors for " + std::to_string(mixer.n_agents()) + " agents");
  }
  GreedyJoint out;
  std::vector<double> maxima;
  for (const auto& s : scores) {
    const std::size_t a = argmax(s);
    out.actions.push_back(a);
    maxima.push_back(s[a]);
  }
  out.value = mixer.mix(maxima, state);
  return out;
}

GreedyJoint brute_force_joint_max(const Mixer& mixer, std::span<const std::vector<double>> scores,
                                  std::span<const double> state) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> joint(n, 0);
  std::vector<double> values(n);
  GreedyJoint best;
  best.value = -INFINITY;
  while (true) {
    for (std::size_t a = 0; a < n; ++a) values[a] = scores[a][joint[a]];
    const double v = mixer.mix(values, state);
    if (v > best.value) best = {joint, v};
    std::size_t a = 0;
    while (a < n && ++joint[a] == scores[a].size()) joint[a++] = 0;
    if (a == n) break;
  }
  return best;
}

void copy_parameters(std::span<const NamedTensor> from, std::span<NamedTensor> to) {
  if (from.size() != to.size()) throw ShapeError("copy_parameters: parameter count mismatch");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].name != to[i].name || from[i].tensor.shape() != to[i].tensor.shape()) {
      throw ShapeError("copy_parameters: " + from[i].name + " " +
                       to_string(from[i].tensor.shape()) + " vs " + to[i].name + " " +
                       to_string(to[i].tensor.shape()));
    }
    auto src = from[i].tensor.values();
    auto dst = to[i].tensor.mutable_values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

std::vector<Tensor> tensors_of(std::span<const NamedTensor> named) {
  std::vector<Tensor> out;
  out.reserve(named.size());
  for (const auto& n : named) out.push_back(n.tensor);
  return out;
}

}  // namespace haven
