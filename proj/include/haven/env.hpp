#pragma once

// Decentralised POMDP interface and the built-in cooperative environments.
//
// All agents share one scalar reward per step. Each environment owns its
// own seeded RNG stream, independent of the learner's exploration RNG, so a
// (seed, action sequence) pair replays the exact same trajectory.

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace haven {

struct EnvSpec {
  std::size_t n_agents = 1;
  std::size_t n_primitive_actions = 1;
  std::size_t obs_dim = 1;
  std::size_t state_dim = 1;
  std::size_t episode_limit = 1;
};

using Observations = std::vector<std::vector<double>>;
using GlobalState = std::vector<double>;

struct ResetResult {
  GlobalState state;
  Observations observations;
};

struct StepResult {
  double reward = 0.0;
  Observations next_observations;
  GlobalState next_state;
  // Episode is over (goal reached or episode_limit hit).
  bool terminated = false;
  // Ended only because episode_limit was hit; the successor state is not absorbing.
  bool truncated = false;
  std::map<std::string, double> info;
};

// Environment-specific key/value parameters from the config `env` section.
using EnvParams = std::map<std::string, std::string>;

class EnvError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class Environment {
public:
  virtual ~Environment() = default;

  virtual std::string id() const = 0;
  const EnvSpec& spec() const { return spec_; }

  ResetResult reset(std::uint64_t seed);
  StepResult step(std::span<const int> joint_action);

  bool done() const { return done_; }
  std::size_t steps() const { return t_; }

protected:
  explicit Environment(EnvSpec spec) : spec_(spec) {}

  virtual ResetResult do_reset() = 0;
  // Advances one step; sets terminated only for genuine terminal states.
  virtual StepResult do_step(std::span<const int> joint_action) = 0;

  std::mt19937_64& rng() { return rng_; }
  EnvSpec spec_;

private:
  std::mt19937_64 rng_;
  std::size_t t_ = 0;
  bool done_ = true;
};

// Ids: climb-po, switch-corridor, gather-then-deliver, chain.
std::unique_ptr<Environment> make_environment(const std::string& id, const EnvParams& params = {});
bool is_known_environment(const std::string& id);

// Partially observable climbing matrix game. Each round both agents pick one
// of three actions and receive the shared payoff; each agent observes only
// its own previous action and an uninformative noise bit.
class ClimbGame final : public Environment {
public:
  struct Options {
    std::size_t rounds = 1;
    double noise_prob = 0.5;
  };
  explicit ClimbGame(Options options);
  static ClimbGame from_params(const EnvParams& params);

  std::string id() const override { return "climb-po"; }
  static double payoff(int a, int b);

  std::span<const int> noise_bits() const { return noise_; }

private:
  ResetResult do_reset() override;
  StepResult do_step(std::span<const int> joint_action) override;
  ResetResult observe() const;
  void draw_noise();

  Options options_;
  std::size_t round_ = 0;
  std::vector<int> last_action_;
  std::vector<int> noise_;
  bool all_optimal_ = true;
};

// Grid corridor split by a wall with a door. The door opens permanently
// once any agent steps onto the switch cell; every agent must then reach the
// goal cell on the far side. Reward 1 on success, minus a step penalty.
class SwitchCorridor final : public Environment {
public:
  struct Options {
    std::size_t n_agents = 2;
    int width = 7;
    int height = 3;
    int wall_x = 4;
    double step_penalty = 0.01;
    std::size_t episode_limit = 40;
  };
  explicit SwitchCorridor(Options options);
  static SwitchCorridor from_params(const EnvParams& params);

  std::string id() const override { return "switch-corridor"; }

  struct Cell {
    int x = 0;
    int y = 0;
    friend bool operator==(const Cell&, const Cell&) = default;
  };
  Cell switch_cell() const { return {0, 0}; }
  Cell door_cell() const { return {options_.wall_x, options_.height / 2}; }
  Cell goal_cell() const { return {options_.width - 1, options_.height / 2}; }
  const std::vector<Cell>& positions() const { return pos_; }
  bool door_open() const { return door_open_; }
  // Places agents for tests.
  void set_positions(std::vector<Cell> positions);

private:
  ResetResult do_reset() override;
  StepResult do_step(std::span<const int> joint_action) override;
  ResetResult observe() const;
  bool blocked(int x, int y) const;

  Options options_;
  std::vector<Cell> pos_;
  std::vector<bool> at_goal_;
  bool door_open_ = false;
};

// Agents pick up items scattered on a grid and carry them to a depot.
// Reward is paid only on delivery; the episode succeeds when every item has
// been delivered. Each agent sees items and teammates within view_radius.
class GatherThenDeliver final : public Environment {
public:
  struct Options {
    std::size_t n_agents = 2;
    std::size_t n_items = 2;
    int width = 5;
    int height = 5;
    int view_radius = 2;
    double total_reward = 10.0;
    std::size_t episode_limit = 25;
  };
  enum Action : int { kStay = 0, kUp, kDown, kLeft, kRight, kInteract };
  static constexpr std::size_t kNumActions = 6;

  explicit GatherThenDeliver(Options options);
  static GatherThenDeliver from_params(const EnvParams& params);

  std::string id() const override { return "gather-then-deliver"; }

  struct Cell {
    int x = 0;
    int y = 0;
    friend bool operator==(const Cell&, const Cell&) = default;
  };
  enum class ItemStatus { kGround, kCarried, kDelivered };

  const Options& options() const { return options_; }
  Cell depot() const { return {0, options_.height / 2}; }
  const std::vector<Cell>& agent_positions() const { return agents_; }
  const std::vector<Cell>& item_positions() const { return items_; }
  const std::vector<ItemStatus>& item_status() const { return status_; }
  const std::vector<int>& carrying() const { return carrying_; }

private:
  ResetResult do_reset() override;
  StepResult do_step(std::span<const int> joint_action) override;
  ResetResult observe() const;

  Options options_;
  std::vector<Cell> agents_;
  std::vector<int> carrying_;  // item index or -1
  std::vector<Cell> items_;
  std::vector<ItemStatus> status_;
  std::size_t elapsed_ = 0;
};

// Single-agent deterministic 3-state chain: actions {0: left, 1: right};
// moving right from the last state pays 1 and terminates.
class ChainEnv final : public Environment {
public:
  struct Options {
    std::size_t n_states = 3;
    std::size_t episode_limit = 10;
  };
  explicit ChainEnv(Options options);
  static ChainEnv from_params(const EnvParams& params);

  std::string id() const override { return "chain"; }
  std::size_t position() const { return pos_; }

private:
  ResetResult do_reset() override;
  StepResult do_step(std::span<const int> joint_action) override;
  ResetResult observe() const;

  Options options_;
  std::size_t pos_ = 0;
};

// Typed lookups into EnvParams with defaults; malformed values throw EnvError.
int param_int(const EnvParams& params, const std::string& key, int fallback);
double param_double(const EnvParams& params, const std::string& key, double fallback);

}  // namespace haven
