#pragma once

#include "haven/env.hpp"
#include "haven/nets.hpp"

#include <string>

namespace haven {

// HAVEN-I trains the low level on r^i only, HAVEN-E on r^e only, HAVEN-B
// fits V with the on-policy bootstrap instead of the max over Q^h. FLAT has
// no high level at all (plain QMIX / VDN).
enum class Variant { kHaven, kHavenI, kHavenE, kHavenB, kFlat };

Variant parse_variant(const std::string& name);
std::string to_string(Variant variant);

struct TrainConfig {
  // Optimiser (one RMSProp state per network family).
  double lr = 0.0005;
  double rms_alpha = 0.99;
  double rms_eps = 1e-5;
  double grad_clip = 10.0;

  std::size_t target_update_episodes = 200;
  std::size_t batch_size = 32;
  std::size_t buffer_capacity = 5000;
  double gamma_h = 0.99;
  double gamma_l = 0.99;

  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::size_t epsilon_anneal_steps = 50000;

  std::size_t k = 3;
  std::size_t n_macro_actions = 8;

  std::size_t hidden_dim = 64;
  std::size_t mixer_embed_dim = 32;
  std::size_t hypernet_hidden_dim = 64;

  Variant variant = Variant::kHaven;
  MixerKind mixer = MixerKind::kQmix;
  // Bootstrap the V target from phi^- instead of the online phi.
  bool value_target_uses_target_net = false;

  std::size_t total_env_steps = 200000;
  std::uint64_t seed = 1;

  std::string env_id = "gather-then-deliver";
  EnvParams env_params;

  std::size_t eval_interval = 10000;
  std::size_t eval_episodes = 32;
  std::size_t dump_episodes = 4;
  // Off by default so metrics.csv is a pure function of (config, seed).
  bool record_wall_time = false;

  bool hierarchical() const { return variant != Variant::kFlat; }
};

// Linear anneal from epsilon_start to epsilon_end over epsilon_anneal_steps.
double epsilon(std::size_t step, const TrainConfig& config);

// Independent, reproducible seed streams derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

namespace seed_stream {
constexpr std::uint64_t kPolicy = 1;
constexpr std::uint64_t kExplore = 2;
constexpr std::uint64_t kSample = 3;
constexpr std::uint64_t kTrainEnv = 4;  // indexed by episode
constexpr std::uint64_t kEvalEnv = 5;   // indexed by eval episode
constexpr std::uint64_t kDump = 6;      // indexed by dump episode
}  // namespace seed_stream

}  // namespace haven
