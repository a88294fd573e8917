#include "haven/env.hpp"

#include <algorithm>
#include <charconv>

namespace haven {

int param_int(const EnvParams& params, const std::string& key, int fallback) {
  auto it = params.find(key);
  if (it == params.end()) return fallback;
  int value = 0;
  const auto& s = it->second;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || end != s.data() + s.size()) {
    throw EnvError("env parameter " + key + ": expected integer, got '" + s + "'");
  }
  return value;
}

double param_double(const EnvParams& params, const std::string& key, double fallback) {
  auto it = params.find(key);
  if (it == params.end()) return fallback;
  double value = 0.0;
  const auto& s = it->second;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || end != s.data() + s.size()) {
    throw EnvError("env parameter " + key + ": expected number, got '" + s + "'");
  }
  return value;
}

ResetResult Environment::reset(std::uint64_t seed) {
  rng_.seed(seed);
  t_ = 0;
  done_ = false;
  return do_reset();
}

StepResult Environment::step(std::span<const int> joint_action) {
  if (done_) throw EnvError(id() + ": step called after termination; reset first");
  if (joint_action.size() != spec_.n_agents) {
    throw EnvError(id() + ": expected " + std::to_string(spec_.n_agents) + " actions, got " +
                   std::to_string(joint_action.size()));
  }
  for (int a : joint_action) {
    if (a < 0 || static_cast<std::size_t>(a) >= spec_.n_primitive_actions) {
      throw EnvError(id() + ": action " + std::to_string(a) + " out of range [0, " +
                     std::to_string(spec_.n_primitive_actions) + ")");
    }
  }
  StepResult result = do_step(joint_action);
  ++t_;
  if (!result.terminated && t_ >= spec_.episode_limit) {
    result.terminated = true;
    result.truncated = true;
  }
  result.info["episode_limit"] = result.truncated ? 1.0 : 0.0;
  if (!result.info.contains("success")) result.info["success"] = 0.0;
  done_ = result.terminated;
  return result;
}

bool is_known_environment(const std::string& id) {
  return id == "climb-po" || id == "switch-corridor" || id == "gather-then-deliver" ||
         id == "chain";
}

std::unique_ptr<Environment> make_environment(const std::string& id, const EnvParams& params) {
  if (id == "climb-po") return std::make_unique<ClimbGame>(ClimbGame::from_params(params));
  if (id == "switch-corridor") {
    return std::make_unique<SwitchCorridor>(SwitchCorridor::from_params(params));
  }
  if (id == "gather-then-deliver") {
    return std::make_unique<GatherThenDeliver>(GatherThenDeliver::from_params(params));
  }
  if (id == "chain") return std::make_unique<ChainEnv>(ChainEnv::from_params(params));
  throw EnvError("unknown environment id '" + id + "'");
}

// ---------------------------------------------------------------------------
// climb-po

namespace {

constexpr double kClimbPayoff[3][3] = {
    {11.0, -30.0, 0.0},
    {-30.0, 7.0, 6.0},
    {0.0, 0.0, 5.0},
};

}  // namespace

ClimbGame::ClimbGame(Options options)
    : Environment(EnvSpec{2, 3, 4, 9, options.rounds}), options_(options) {
  if (options.rounds == 0) throw EnvError("climb-po: rounds must be >= 1");
  if (options.noise_prob < 0.0 || options.noise_prob > 1.0) {
    throw EnvError("climb-po: noise_prob must lie in [0, 1]");
  }
}

ClimbGame ClimbGame::from_params(const EnvParams& params) {
  Options o;
  o.rounds = static_cast<std::size_t>(param_int(params, "rounds", static_cast<int>(o.rounds)));
  o.noise_prob = param_double(params, "noise_prob", o.noise_prob);
  return ClimbGame(o);
}

double ClimbGame::payoff(int a, int b) { return kClimbPayoff[a][b]; }

void ClimbGame::draw_noise() {
  std::bernoulli_distribution coin(options_.noise_prob);
  for (auto& bit : noise_) bit = coin(rng()) ? 1 : 0;
}

ResetResult ClimbGame::do_reset() {
  round_ = 0;
  last_action_.assign(2, -1);
  noise_.assign(2, 0);
  all_optimal_ = true;
  draw_noise();
  return observe();
}

StepResult ClimbGame::do_step(std::span<const int> joint_action) {
  StepResult r;
  r.reward = payoff(joint_action[0], joint_action[1]);
  all_optimal_ = all_optimal_ && joint_action[0] == 0 && joint_action[1] == 0;
  last_action_.assign(joint_action.begin(), joint_action.end());
  ++round_;
  draw_noise();
  auto obs = observe();
  r.next_observations = std::move(obs.observations);
  r.next_state = std::move(obs.state);
  r.terminated = round_ >= options_.rounds;
  r.info["success"] = (r.terminated && all_optimal_) ? 1.0 : 0.0;
  return r;
}

ResetResult ClimbGame::observe() const {
  ResetResult out;
  out.state.assign(spec_.state_dim, 0.0);
  out.observations.assign(2, std::vector<double>(spec_.obs_dim, 0.0));
  for (std::size_t a = 0; a < 2; ++a) {
    if (last_action_[a] >= 0) {
      out.observations[a][static_cast<std::size_t>(last_action_[a])] = 1.0;
      out.state[a * 3 + static_cast<std::size_t>(last_action_[a])] = 1.0;
    }
    out.observations[a][3] = noise_[a];
    out.state[6 + a] = noise_[a];
  }
  out.state[8] = static_cast<double>(round_) / static_cast<double>(options_.rounds);
  return out;
}

// ---------------------------------------------------------------------------
// switch-corridor

namespace {

constexpr int kDx[5] = {0, 0, 0, -1, 1};
constexpr int kDy[5] = {0, -1, 1, 0, 0};
constexpr std::size_t kCorridorChannels = 4;

}  // namespace

SwitchCorridor::SwitchCorridor(Options o)
    : Environment(EnvSpec{o.n_agents, 5, 9 * kCorridorChannels + 2,
                          kCorridorChannels * static_cast<std::size_t>(o.width * o.height) + 1,
                          o.episode_limit}),
      options_(o) {
  if (o.n_agents < 2 || o.n_agents > 4) throw EnvError("switch-corridor: n_agents must be 2..4");
  if (o.height < 1 || o.wall_x < 2 || o.wall_x >= o.width - 1) {
    throw EnvError("switch-corridor: need height >= 1 and 2 <= wall_x < width - 1");
  }
  if (o.episode_limit == 0) throw EnvError("switch-corridor: episode_limit must be >= 1");
}

SwitchCorridor SwitchCorridor::from_params(const EnvParams& params) {
  Options o;
  o.n_agents = static_cast<std::size_t>(param_int(params, "n_agents", static_cast<int>(o.n_agents)));
  o.width = param_int(params, "width", o.width);
  o.height = param_int(params, "height", o.height);
  o.wall_x = param_int(params, "wall_x", o.wall_x);
  o.step_penalty = param_double(params, "step_penalty", o.step_penalty);
  o.episode_limit = static_cast<std::size_t>(
      param_int(params, "episode_limit", static_cast<int>(o.episode_limit)));
  return SwitchCorridor(o);
}

bool SwitchCorridor::blocked(int x, int y) const {
  if (x < 0 || y < 0 || x >= options_.width || y >= options_.height) return true;
  if (x != options_.wall_x) return false;
  return !(door_open_ && Cell{x, y} == door_cell());
}

void SwitchCorridor::set_positions(std::vector<Cell> positions) {
  if (positions.size() != options_.n_agents) throw EnvError("switch-corridor: wrong agent count");
  pos_ = std::move(positions);
}

ResetResult SwitchCorridor::do_reset() {
  door_open_ = false;
  at_goal_.assign(options_.n_agents, false);
  pos_.clear();
  std::uniform_int_distribution<int> xs(0, options_.wall_x - 1);
  std::uniform_int_distribution<int> ys(0, options_.height - 1);
  for (std::size_t a = 0; a < options_.n_agents; ++a) {
    Cell c;
    do {
      c = {xs(rng()), ys(rng())};
    } while (c == switch_cell());
    pos_.push_back(c);
  }
  return observe();
}

StepResult SwitchCorridor::do_step(std::span<const int> joint_action) {
  for (std::size_t a = 0; a < pos_.size(); ++a) {
    if (at_goal_[a]) continue;
    const int nx = pos_[a].x + kDx[joint_action[a]];
    const int ny = pos_[a].y + kDy[joint_action[a]];
    if (!blocked(nx, ny)) pos_[a] = {nx, ny};
  }
  for (std::size_t a = 0; a < pos_.size(); ++a) {
    if (pos_[a] == switch_cell()) door_open_ = true;
    if (pos_[a] == goal_cell()) at_goal_[a] = true;
  }
  StepResult r;
  const bool success = std::all_of(at_goal_.begin(), at_goal_.end(), [](bool b) { return b; });
  r.reward = (success ? 1.0 : 0.0) - options_.step_penalty;
  r.terminated = success;
  r.info["success"] = success ? 1.0 : 0.0;
  auto obs = observe();
  r.next_observations = std::move(obs.observations);
  r.next_state = std::move(obs.state);
  return r;
}

ResetResult SwitchCorridor::observe() const {
  const int w = options_.width, h = options_.height;
  ResetResult out;
  out.state.assign(spec_.state_dim, 0.0);
  auto channels = [&](int x, int y, std::size_t self, double* dst) {
    if (blocked(x, y)) {
      dst[0] = 1.0;
      return;
    }
    if (Cell{x, y} == switch_cell()) dst[1] = 1.0;
    if (Cell{x, y} == goal_cell()) dst[2] = 1.0;
    for (std::size_t b = 0; b < pos_.size(); ++b) {
      if (b != self && pos_[b] == Cell{x, y}) dst[3] += 1.0;
    }
  };
  const std::size_t none = pos_.size();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double* dst = &out.state[kCorridorChannels * static_cast<std::size_t>(y * w + x)];
      channels(x, y, none, dst);
      dst[3] /= static_cast<double>(pos_.size());
    }
  }
  out.state.back() = door_open_ ? 1.0 : 0.0;
  for (std::size_t a = 0; a < pos_.size(); ++a) {
    std::vector<double> z(spec_.obs_dim, 0.0);
    std::size_t k = 0;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx, ++k) {
        channels(pos_[a].x + dx, pos_[a].y + dy, a, &z[k * kCorridorChannels]);
      }
    }
    z[9 * kCorridorChannels] = static_cast<double>(pos_[a].x) / (w - 1);
    z[9 * kCorridorChannels + 1] = h > 1 ? static_cast<double>(pos_[a].y) / (h - 1) : 0.0;
    out.observations.push_back(std::move(z));
  }
  return out;
}

// ---------------------------------------------------------------------------
// gather-then-deliver

GatherThenDeliver::GatherThenDeliver(Options o)
    : Environment(EnvSpec{o.n_agents, kNumActions, 2 + 3 * o.n_items + 3 * o.n_agents,
                          3 * o.n_agents + 5 * o.n_items + 1, o.episode_limit}),
      options_(o) {
  if (o.n_agents < 1 || o.n_items < 1) throw EnvError("gather-then-deliver: need agents and items");
  if (o.width < 3 || o.height < 1) throw EnvError("gather-then-deliver: grid too small");
  const auto right_cells =
      static_cast<std::size_t>((o.width - o.width / 2) * o.height);
  if (o.n_items > right_cells) throw EnvError("gather-then-deliver: too many items for grid");
  if (o.episode_limit == 0) throw EnvError("gather-then-deliver: episode_limit must be >= 1");
}

GatherThenDeliver GatherThenDeliver::from_params(const EnvParams& params) {
  Options o;
  o.n_agents = static_cast<std::size_t>(param_int(params, "n_agents", static_cast<int>(o.n_agents)));
  o.n_items = static_cast<std::size_t>(param_int(params, "n_items", static_cast<int>(o.n_items)));
  o.width = param_int(params, "width", o.width);
  o.height = param_int(params, "height", o.height);
  o.view_radius = param_int(params, "view_radius", o.view_radius);
  o.total_reward = param_double(params, "total_reward", o.total_reward);
  o.episode_limit = static_cast<std::size_t>(
      param_int(params, "episode_limit", static_cast<int>(o.episode_limit)));
  return GatherThenDeliver(o);
}

ResetResult GatherThenDeliver::do_reset() {
  const int w = options_.width, h = options_.height;
  agents_.clear();
  items_.clear();
  elapsed_ = 0;
  carrying_.assign(options_.n_agents, -1);
  status_.assign(options_.n_items, ItemStatus::kGround);
  std::uniform_int_distribution<int> ax(0, 1);
  std::uniform_int_distribution<int> ys(0, h - 1);
  for (std::size_t a = 0; a < options_.n_agents; ++a) agents_.push_back({ax(rng()), ys(rng())});
  std::uniform_int_distribution<int> ix(w / 2, w - 1);
  while (items_.size() < options_.n_items) {
    Cell c{ix(rng()), ys(rng())};
    if (std::find(items_.begin(), items_.end(), c) == items_.end()) items_.push_back(c);
  }
  return observe();
}

StepResult GatherThenDeliver::do_step(std::span<const int> joint_action) {
  StepResult r;
  const double per_item = options_.total_reward / static_cast<double>(options_.n_items);
  for (std::size_t a = 0; a < agents_.size(); ++a) {
    const int act = joint_action[a];
    if (act == kInteract) {
      if (carrying_[a] < 0) {
        for (std::size_t i = 0; i < items_.size(); ++i) {
          if (status_[i] == ItemStatus::kGround && items_[i] == agents_[a]) {
            status_[i] = ItemStatus::kCarried;
            carrying_[a] = static_cast<int>(i);
            break;
          }
        }
      } else if (agents_[a] == depot()) {
        status_[static_cast<std::size_t>(carrying_[a])] = ItemStatus::kDelivered;
        carrying_[a] = -1;
        r.reward += per_item;
      }
      continue;
    }
    const int nx = agents_[a].x + kDx[act];
    const int ny = agents_[a].y + kDy[act];
    if (nx >= 0 && ny >= 0 && nx < options_.width && ny < options_.height) {
      agents_[a] = {nx, ny};
      if (carrying_[a] >= 0) items_[static_cast<std::size_t>(carrying_[a])] = agents_[a];
    }
  }
  ++elapsed_;
  const bool success = std::all_of(status_.begin(), status_.end(),
                                   [](ItemStatus s) { return s == ItemStatus::kDelivered; });
  r.terminated = success;
  r.info["success"] = success ? 1.0 : 0.0;
  auto obs = observe();
  r.next_observations = std::move(obs.observations);
  r.next_state = std::move(obs.state);
  return r;
}

ResetResult GatherThenDeliver::observe() const {
  const double sx = options_.width - 1;
  const double sy = options_.height > 1 ? options_.height - 1 : 1;
  const int radius = options_.view_radius;
  ResetResult out;
  auto& s = out.state;
  for (std::size_t a = 0; a < agents_.size(); ++a) {
    s.push_back(agents_[a].x / sx);
    s.push_back(agents_[a].y / sy);
    s.push_back(carrying_[a] >= 0 ? 1.0 : 0.0);
  }
  for (std::size_t i = 0; i < items_.size(); ++i) {
    s.push_back(items_[i].x / sx);
    s.push_back(items_[i].y / sy);
    s.push_back(status_[i] == ItemStatus::kGround ? 1.0 : 0.0);
    s.push_back(status_[i] == ItemStatus::kCarried ? 1.0 : 0.0);
    s.push_back(status_[i] == ItemStatus::kDelivered ? 1.0 : 0.0);
  }
  s.push_back(static_cast<double>(elapsed_) / static_cast<double>(options_.episode_limit));
  auto visible = [radius](Cell from, Cell to) {
    return std::abs(from.x - to.x) <= radius && std::abs(from.y - to.y) <= radius;
  };
  for (std::size_t a = 0; a < agents_.size(); ++a) {
    const Cell me = agents_[a];
    std::vector<double> z;
    z.reserve(spec_.obs_dim);
    z.push_back(me.x / sx);
    z.push_back(me.y / sy);
    z.push_back(carrying_[a] >= 0 ? 1.0 : 0.0);
    z.push_back((depot().x - me.x) / sx);
    z.push_back((depot().y - me.y) / sy);
    for (std::size_t i = 0; i < items_.size(); ++i) {
      if (status_[i] == ItemStatus::kGround && visible(me, items_[i])) {
        z.insert(z.end(), {1.0, (items_[i].x - me.x) / sx, (items_[i].y - me.y) / sy});
      } else {
        z.insert(z.end(), {0.0, 0.0, 0.0});
      }
    }
    for (std::size_t b = 0; b < agents_.size(); ++b) {
      if (b == a) continue;
      if (visible(me, agents_[b])) {
        z.insert(z.end(), {1.0, (agents_[b].x - me.x) / sx, (agents_[b].y - me.y) / sy});
      } else {
        z.insert(z.end(), {0.0, 0.0, 0.0});
      }
    }
    out.observations.push_back(std::move(z));
  }
  return out;
}

// ---------------------------------------------------------------------------
// chain

ChainEnv::ChainEnv(Options o)
    : Environment(EnvSpec{1, 2, o.n_states, o.n_states, o.episode_limit}), options_(o) {
  if (o.n_states < 2) throw EnvError("chain: need at least 2 states");
  if (o.episode_limit == 0) throw EnvError("chain: episode_limit must be >= 1");
}

ChainEnv ChainEnv::from_params(const EnvParams& params) {
  Options o;
  o.n_states = static_cast<std::size_t>(param_int(params, "n_states", static_cast<int>(o.n_states)));
  o.episode_limit = static_cast<std::size_t>(
      param_int(params, "episode_limit", static_cast<int>(o.episode_limit)));
  return ChainEnv(o);
}

ResetResult ChainEnv::do_reset() {
  pos_ = 0;
  return observe();
}

StepResult ChainEnv::do_step(std::span<const int> joint_action) {
  StepResult r;
  if (joint_action[0] == 1) {
    if (pos_ + 1 == options_.n_states) {
      r.reward = 1.0;
      r.terminated = true;
    } else {
      ++pos_;
    }
  } else if (pos_ > 0) {
    --pos_;
  }
  r.info["success"] = r.terminated ? 1.0 : 0.0;
  auto obs = observe();
  r.next_observations = std::move(obs.observations);
  r.next_state = std::move(obs.state);
  return r;
}

ResetResult ChainEnv::observe() const {
  ResetResult out;
  out.state.assign(options_.n_states, 0.0);
  out.state[pos_] = 1.0;
  out.observations = {out.state};
  return out;
}

}  // namespace haven
