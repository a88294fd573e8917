#include "haven/policy.hpp"

#include <stdexcept>

namespace haven {

namespace {

void append_one_hot(std::vector<double>& row, int index, std::size_t size) {
  const std::size_t start = row.size();
  row.resize(start + size, 0.0);
  if (index >= 0) {
    if (static_cast<std::size_t>(index) >= size) {
      throw std::out_of_range("one-hot index " + std::to_string(index) + " >= " +
                              std::to_string(size));
    }
    row[start + static_cast<std::size_t>(index)] = 1.0;
  }
}

std::size_t meta_size(const Checkpoint& cp, const std::string& key) {
  auto it = cp.meta.find(key);
  if (it == cp.meta.end()) throw std::runtime_error("checkpoint missing meta '" + key + "'");
  return static_cast<std::size_t>(std::stoull(it->second));
}

}  // namespace

std::vector<NamedTensor> AgentLevel::parameters(const std::string& prefix) const {
  auto out = agent.parameters(prefix + ".agent");
  auto mixer_params = mixer.parameters(prefix + ".mixer");
  out.insert(out.end(), mixer_params.begin(), mixer_params.end());
  return out;
}

HierarchicalPolicy::HierarchicalPolicy(PolicyDims dims, std::uint64_t seed) : dims_(dims) {
  Rng rng(seed);
  const std::size_t n = dims.n_agents;
  auto level = [&](std::size_t input, std::size_t output) {
    AgentLevel l;
    l.agent = RecurrentAgentNet(input, dims.hidden_dim, output, rng);
    l.mixer = Mixer(dims.mixer, n, dims.state_dim, dims.mixer_options, rng);
    return l;
  };
  if (hierarchical()) {
    macro_ = level(macro_input_dim(), dims.n_macro_actions);
    value_ = level(macro_input_dim(), 1);
    macro_target_ = level(macro_input_dim(), dims.n_macro_actions);
  }
  low_ = level(low_input_dim(), dims.n_actions);
  low_target_ = level(low_input_dim(), dims.n_actions);
  refresh_targets();
}

std::size_t HierarchicalPolicy::macro_input_dim() const {
  return dims_.obs_dim + dims_.n_macro_actions + dims_.n_agents;
}

std::size_t HierarchicalPolicy::low_input_dim() const {
  return dims_.obs_dim + dims_.n_macro_actions + dims_.n_actions + dims_.n_agents;
}

std::vector<NamedTensor> HierarchicalPolicy::value_parameters() const {
  return value_ ? value_->parameters("value") : std::vector<NamedTensor>{};
}

std::vector<NamedTensor> HierarchicalPolicy::macro_parameters() const {
  return macro_ ? macro_->parameters("macro") : std::vector<NamedTensor>{};
}

std::vector<NamedTensor> HierarchicalPolicy::low_parameters() const {
  return low_.parameters("low");
}

std::vector<NamedTensor> HierarchicalPolicy::macro_target_parameters() const {
  return macro_target_ ? macro_target_->parameters("macro") : std::vector<NamedTensor>{};
}

std::vector<NamedTensor> HierarchicalPolicy::low_target_parameters() const {
  return low_target_.parameters("low");
}

std::vector<NamedTensor> HierarchicalPolicy::all_parameters() const {
  std::vector<NamedTensor> out;
  auto add = [&out](std::vector<NamedTensor> part, const std::string& prefix) {
    for (auto& p : part) out.push_back({prefix + p.name, std::move(p.tensor)});
  };
  add(macro_parameters(), "");
  add(value_parameters(), "");
  add(low_parameters(), "");
  add(macro_target_parameters(), "target.");
  add(low_target_parameters(), "target.");
  return out;
}

void HierarchicalPolicy::refresh_targets() {
  if (macro_) {
    auto dst = macro_target_parameters();
    copy_parameters(macro_parameters(), dst);
  }
  auto dst = low_target_parameters();
  copy_parameters(low_parameters(), dst);
}

Checkpoint HierarchicalPolicy::to_checkpoint() const {
  Checkpoint cp;
  cp.meta["n_agents"] = std::to_string(dims_.n_agents);
  cp.meta["obs_dim"] = std::to_string(dims_.obs_dim);
  cp.meta["state_dim"] = std::to_string(dims_.state_dim);
  cp.meta["n_actions"] = std::to_string(dims_.n_actions);
  cp.meta["n_macro_actions"] = std::to_string(dims_.n_macro_actions);
  cp.meta["hidden_dim"] = std::to_string(dims_.hidden_dim);
  cp.meta["mixer"] = to_string(dims_.mixer);
  cp.meta["mixer_embed_dim"] = std::to_string(dims_.mixer_options.embed_dim);
  cp.meta["hypernet_hidden_dim"] = std::to_string(dims_.mixer_options.hypernet_hidden);
  for (auto& p : all_parameters()) cp.tensors.push_back({p.name, p.tensor.detach()});
  return cp;
}

HierarchicalPolicy HierarchicalPolicy::from_checkpoint(const Checkpoint& cp) {
  PolicyDims dims;
  dims.n_agents = meta_size(cp, "n_agents");
  dims.obs_dim = meta_size(cp, "obs_dim");
  dims.state_dim = meta_size(cp, "state_dim");
  dims.n_actions = meta_size(cp, "n_actions");
  dims.n_macro_actions = meta_size(cp, "n_macro_actions");
  dims.hidden_dim = meta_size(cp, "hidden_dim");
  dims.mixer = parse_mixer_kind(cp.meta.at("mixer"));
  dims.mixer_options.embed_dim = meta_size(cp, "mixer_embed_dim");
  dims.mixer_options.hypernet_hidden = meta_size(cp, "hypernet_hidden_dim");
  HierarchicalPolicy policy(dims, 0);
  auto params = policy.all_parameters();
  if (params.size() != cp.tensors.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(cp.tensors.size()) +
                             " tensors, policy expects " + std::to_string(params.size()));
  }
  std::vector<NamedTensor> src(cp.tensors.begin(), cp.tensors.end());
  copy_parameters(src, params);
  return policy;
}

HierarchicalPolicy HierarchicalPolicy::clone() const { return from_checkpoint(to_checkpoint()); }

void append_macro_input(std::vector<double>& row, std::span<const double> obs, int prev_macro,
                        std::size_t agent, const PolicyDims& dims) {
  row.insert(row.end(), obs.begin(), obs.end());
  append_one_hot(row, prev_macro, dims.n_macro_actions);
  append_one_hot(row, static_cast<int>(agent), dims.n_agents);
}

void append_low_input(std::vector<double>& row, std::span<const double> obs, int macro,
                      int prev_action, std::size_t agent, const PolicyDims& dims) {
  row.insert(row.end(), obs.begin(), obs.end());
  append_one_hot(row, macro, dims.n_macro_actions);
  append_one_hot(row, prev_action, dims.n_actions);
  append_one_hot(row, static_cast<int>(agent), dims.n_agents);
}

}  // namespace haven
