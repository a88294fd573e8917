#include "haven/harness.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#ifndef HAVEN_REVISION
#define HAVEN_REVISION "unknown"
#endif

namespace haven {

namespace fs = std::filesystem;

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw UsageError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw UsageError("config key '" + key + "': expected true/false, got '" + text + "'");
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

// One config key: how to read it into a TrainConfig and print it back.
struct Field {
  const char* section;
  const char* key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define HAVEN_SIZE_FIELD(section, key, member)                                         \
  Field {                                                                              \
    section, key,                                                                      \
        [](TrainConfig& c, const std::string& v) {                                     \
          c.member = parse_number<std::size_t>(key, v);                                \
        },                                                                             \
        [](const TrainConfig& c) { return std::to_string(c.member); }                  \
  }
#define HAVEN_DOUBLE_FIELD(section, key, member)                                       \
  Field {                                                                              \
    section, key,                                                                      \
        [](TrainConfig& c, const std::string& v) { c.member = parse_number<double>(key, v); }, \
        [](const TrainConfig& c) { return format_double(c.member); }                   \
  }
#define HAVEN_BOOL_FIELD(section, key, member)                                         \
  Field {                                                                              \
    section, key, [](TrainConfig& c, const std::string& v) { c.member = parse_bool(key, v); }, \
        [](const TrainConfig& c) { return bool_text(c.member); }                       \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"train", "variant",
            [](TrainConfig& c, const std::string& v) {
              try {
                c.variant = parse_variant(v);
              } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
              }
            },
            [](const TrainConfig& c) { return to_string(c.variant); }},
      Field{"train", "mixer",
            [](TrainConfig& c, const std::string& v) {
              try {
                c.mixer = parse_mixer_kind(v);
              } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
              }
            },
            [](const TrainConfig& c) { return to_string(c.mixer); }},
      HAVEN_DOUBLE_FIELD("train", "lr", lr),
      HAVEN_DOUBLE_FIELD("train", "rms_alpha", rms_alpha),
      HAVEN_DOUBLE_FIELD("train", "rms_eps", rms_eps),
      HAVEN_DOUBLE_FIELD("train", "grad_clip", grad_clip),
      HAVEN_SIZE_FIELD("train", "target_update_episodes", target_update_episodes),
      HAVEN_SIZE_FIELD("train", "batch_size", batch_size),
      HAVEN_SIZE_FIELD("train", "buffer_capacity", buffer_capacity),
      HAVEN_DOUBLE_FIELD("train", "gamma_h", gamma_h),
      HAVEN_DOUBLE_FIELD("train", "gamma_l", gamma_l),
      HAVEN_DOUBLE_FIELD("train", "epsilon_start", epsilon_start),
      HAVEN_DOUBLE_FIELD("train", "epsilon_end", epsilon_end),
      HAVEN_SIZE_FIELD("train", "epsilon_anneal_steps", epsilon_anneal_steps),
      HAVEN_SIZE_FIELD("train", "k", k),
      HAVEN_SIZE_FIELD("train", "n_macro_actions", n_macro_actions),
      HAVEN_SIZE_FIELD("train", "hidden_dim", hidden_dim),
      HAVEN_SIZE_FIELD("train", "mixer_embed_dim", mixer_embed_dim),
      HAVEN_SIZE_FIELD("train", "hypernet_hidden_dim", hypernet_hidden_dim),
      HAVEN_BOOL_FIELD("train", "value_target_uses_target_net", value_target_uses_target_net),
      HAVEN_SIZE_FIELD("train", "total_env_steps", total_env_steps),
      Field{"train", "seed",
            [](TrainConfig& c, const std::string& v) {
              c.seed = parse_number<std::uint64_t>("seed", v);
            },
            [](const TrainConfig& c) { return std::to_string(c.seed); }},
      HAVEN_SIZE_FIELD("eval", "interval", eval_interval),
      HAVEN_SIZE_FIELD("eval", "episodes", eval_episodes),
      HAVEN_SIZE_FIELD("eval", "dump_episodes", dump_episodes),
      HAVEN_BOOL_FIELD("eval", "record_wall_time", record_wall_time),
  };
  return table;
}

#undef HAVEN_SIZE_FIELD
#undef HAVEN_DOUBLE_FIELD
#undef HAVEN_BOOL_FIELD

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct AlgoEntry {
  const char* name;
  Variant variant;
  MixerKind mixer;
};

constexpr AlgoEntry kAlgos[] = {
    {"haven-qmix", Variant::kHaven, MixerKind::kQmix},
    {"haven-vdn", Variant::kHaven, MixerKind::kVdn},
    {"qmix", Variant::kFlat, MixerKind::kQmix},
    {"vdn", Variant::kFlat, MixerKind::kVdn},
    {"haven-i", Variant::kHavenI, MixerKind::kQmix},
    {"haven-e", Variant::kHavenE, MixerKind::kQmix},
    {"haven-b", Variant::kHavenB, MixerKind::kQmix},
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("error writing " + path.string());
}

std::string manifest_text(const TrainConfig& config, const std::string& start,
                          const std::string& end) {
  std::ostringstream out;
  out << config_to_ini(config);
  out << "\n[run]\n";
  out << "revision = " << revision() << '\n';
  out << "algo = " << algo_name(config) << '\n';
  out << "seed = " << config.seed << '\n';
  out << "started = " << start << '\n';
  out << "finished = " << (end.empty() ? "running" : end) << '\n';
  out << "layout = manifest metrics.csv policy_dump.csv checkpoints/step_<env_step>.ckpt "
         "checkpoints/final.ckpt\n";
  return out.str();
}

}  // namespace

std::string revision() { return HAVEN_REVISION; }

TrainConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  TrainConfig config;
  std::optional<std::string> algo;
  for (const auto& [section, entries] : tree) {
    if (section == "env") {
      for (const auto& [key, node] : entries) {
        if (key == "id") {
          config.env_id = node.data();
        } else {
          config.env_params[key] = node.data();
        }
      }
      continue;
    }
    if (section != "train" && section != "eval") continue;
    for (const auto& [key, node] : entries) {
      if (section == "train" && key == "algo") {
        algo = node.data();
        continue;
      }
      auto it = std::find_if(fields().begin(), fields().end(), [&](const Field& f) {
        return section == f.section && key == f.key;
      });
      if (it == fields().end()) {
        throw UsageError("config: unknown key '" + key + "' in [" + section + "]");
      }
      it->set(config, node.data());
    }
  }
  if (algo) apply_algo(config, *algo);
  if (!is_known_environment(config.env_id)) {
    throw UsageError("config: unknown environment '" + config.env_id + "'");
  }
  return config;
}

TrainConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  return parse_config(in);
}

std::string config_to_ini(const TrainConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const Field& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(config) << '\n';
  }
  out << "\n[env]\nid = " << config.env_id << '\n';
  for (const auto& [key, value] : config.env_params) out << key << " = " << value << '\n';
  return out.str();
}

void apply_algo(TrainConfig& config, const std::string& algo) {
  for (const auto& entry : kAlgos) {
    if (algo == entry.name) {
      config.variant = entry.variant;
      config.mixer = entry.mixer;
      return;
    }
  }
  std::string names;
  for (const auto& n : algo_names()) names += (names.empty() ? "" : ", ") + n;
  throw UsageError("unknown algo '" + algo + "' (expected one of " + names + ")");
}

std::string algo_name(const TrainConfig& config) {
  for (const auto& entry : kAlgos) {
    if (entry.variant == config.variant && entry.mixer == config.mixer) return entry.name;
  }
  // Ablations with the VDN mixer have no CLI name.
  return to_string(config.variant) + "+" + to_string(config.mixer);
}

const std::vector<std::string>& algo_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& entry : kAlgos) out.emplace_back(entry.name);
    return out;
  }();
  return names;
}

std::string metrics_header() {
  return "env_step,episode,epsilon,loss_v,loss_qh,loss_ql,train_return,eval_return_mean,"
         "eval_success_rate,wall_ms";
}

std::string format_metric_row(const MetricRow& row) {
  std::string out = std::to_string(row.env_step) + ',' + std::to_string(row.episode);
  for (double v : {row.epsilon, row.loss_v, row.loss_qh, row.loss_ql, row.train_return,
                   row.eval_return_mean, row.eval_success_rate, row.wall_ms}) {
    out += ',';
    out += format_double(v);
  }
  return out;
}

std::vector<MetricRow> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != metrics_header()) {
    throw std::runtime_error(path.string() + ": unexpected metrics header");
  }
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 10) throw std::runtime_error(path.string() + ": malformed row " + line);
    MetricRow r;
    r.env_step = parse_number<std::size_t>("env_step", cells[0]);
    r.episode = parse_number<std::size_t>("episode", cells[1]);
    double* dst[] = {&r.epsilon,      &r.loss_v,           &r.loss_qh,
                     &r.loss_ql,      &r.train_return,     &r.eval_return_mean,
                     &r.eval_success_rate, &r.wall_ms};
    for (std::size_t i = 0; i < 8; ++i) *dst[i] = parse_number<double>("metric", cells[i + 2]);
    rows.push_back(r);
  }
  return rows;
}

Checkpoint make_checkpoint(const HierarchicalPolicy& policy, const TrainConfig& config,
                           std::size_t env_step) {
  Checkpoint cp = policy.to_checkpoint();
  cp.meta["k"] = std::to_string(config.k);
  cp.meta["env_id"] = config.env_id;
  cp.meta["algo"] = algo_name(config);
  cp.meta["seed"] = std::to_string(config.seed);
  cp.meta["env_step"] = std::to_string(env_step);
  return cp;
}

std::vector<PolicyDumpRow> export_policy_dump(const HierarchicalPolicy& policy, Environment& env,
                                              std::size_t k, std::size_t episodes,
                                              std::uint64_t seed) {
  std::vector<PolicyDumpRow> rows;
  Rng rng(seed);
  for (std::size_t e = 0; e < episodes; ++e) {
    const EpisodeRecord rec =
        run_episode(policy, env, k, derive_seed(seed, seed_stream::kDump, e), 0.0, rng);
    for (std::size_t t = 0; t < rec.length(); ++t) {
      for (std::size_t a = 0; a < rec.actions[t].size(); ++a) {
        PolicyDumpRow row;
        row.episode = e;
        row.t = t;
        row.agent = a;
        row.macro_action = rec.hierarchical() ? rec.macro_actions[t / k][a] : -1;
        row.primitive_action = rec.actions[t][a];
        row.state = rec.states[t];
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

std::vector<PolicyDumpRow> export_policy_dump(const Checkpoint& checkpoint, Environment& env,
                                              std::size_t episodes, std::uint64_t seed) {
  const HierarchicalPolicy policy = HierarchicalPolicy::from_checkpoint(checkpoint);
  const PolicyDims& d = policy.dims();
  const EnvSpec& s = env.spec();
  if (d.n_agents != s.n_agents || d.obs_dim != s.obs_dim || d.state_dim != s.state_dim ||
      d.n_actions != s.n_primitive_actions) {
    throw std::invalid_argument("checkpoint/env spec mismatch: checkpoint expects " +
                                std::to_string(d.n_agents) + " agents, obs " +
                                std::to_string(d.obs_dim) + ", state " +
                                std::to_string(d.state_dim) + ", actions " +
                                std::to_string(d.n_actions) + "; " + env.id() + " has " +
                                std::to_string(s.n_agents) + ", " + std::to_string(s.obs_dim) +
                                ", " + std::to_string(s.state_dim) + ", " +
                                std::to_string(s.n_primitive_actions));
  }
  auto id = checkpoint.meta.find("env_id");
  if (id != checkpoint.meta.end() && id->second != env.id()) {
    throw std::invalid_argument("checkpoint was trained on " + id->second + ", not " + env.id());
  }
  auto k = checkpoint.meta.find("k");
  const std::size_t period = k == checkpoint.meta.end() ? 3 : std::stoul(k->second);
  return export_policy_dump(policy, env, period, episodes, seed);
}

void write_policy_dump(const fs::path& path, std::span<const PolicyDumpRow> rows,
                       std::size_t state_dim) {
  std::string text = "episode,t,agent,macro_action,primitive_action";
  for (std::size_t i = 0; i < state_dim; ++i) text += ",f" + std::to_string(i);
  text += '\n';
  for (const auto& r : rows) {
    text += std::to_string(r.episode) + ',' + std::to_string(r.t) + ',' +
            std::to_string(r.agent) + ',' + std::to_string(r.macro_action) + ',' +
            std::to_string(r.primitive_action);
    for (double v : r.state) text += ',' + format_double(v);
    text += '\n';
  }
  write_file(path, text);
}

RunResult run_experiment(const TrainConfig& config, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir / "checkpoints", ec);
  if (ec) {
    throw std::runtime_error("cannot create output directory " + out_dir.string() + ": " +
                             ec.message());
  }
  const std::string started = utc_timestamp();
  write_file(out_dir / "manifest", manifest_text(config, started, ""));

  std::ofstream metrics(out_dir / "metrics.csv", std::ios::binary);
  if (!metrics) throw std::runtime_error("cannot write " + (out_dir / "metrics.csv").string());
  metrics << metrics_header() << '\n';

  RunResult result;
  result.out_dir = out_dir;
  Trainer trainer(config);
  auto save = [&](const std::string& name, std::size_t step) {
    save_checkpoint(out_dir / "checkpoints" / name, make_checkpoint(trainer.policy(), config, step));
  };
  try {
    trainer.run(
        [&](const MetricRow& row) {
          metrics << format_metric_row(row) << '\n';
          metrics.flush();
          result.rows.push_back(row);
        },
        [&](std::size_t step, const HierarchicalPolicy&) {
          save("step_" + std::to_string(step) + ".ckpt", step);
        });
  } catch (const DivergenceError&) {
    save("diverged.ckpt", trainer.env_steps());
    throw;
  }
  save("final.ckpt", trainer.env_steps());
  if (!metrics) throw std::runtime_error("error writing metrics.csv");

  auto env = make_environment(config.env_id, config.env_params);
  const auto dump =
      export_policy_dump(trainer.policy(), *env, config.k, config.dump_episodes, config.seed);
  write_policy_dump(out_dir / "policy_dump.csv", dump, env->spec().state_dim);

  write_file(out_dir / "manifest", manifest_text(config, started, utc_timestamp()));
  return result;
}

double nearest_rank_percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty set");
  if (p < 0.0 || p > 100.0) throw std::invalid_argument("percentile outside [0, 100]");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  const auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(p / 100.0 * n)));
  return values[std::min(rank, values.size()) - 1];
}

std::vector<SweepPoint> aggregate_sweep(const std::vector<std::vector<MetricRow>>& runs,
                                        const TrainConfig& config) {
  if (runs.empty()) return {};
  std::size_t points = runs.front().size();
  for (const auto& r : runs) points = std::min(points, r.size());
  std::vector<SweepPoint> out;
  for (std::size_t i = 0; i < points; ++i) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r[i].eval_success_rate);
    SweepPoint p;
    p.env_step = i + 1 == points ? std::max<std::size_t>(config.total_env_steps,
                                                         i * config.eval_interval)
                                 : i * config.eval_interval;
    p.median = nearest_rank_percentile(v, 50);
    p.p25 = nearest_rank_percentile(v, 25);
    p.p75 = nearest_rank_percentile(v, 75);
    out.push_back(p);
  }
  return out;
}

std::string format_sweep_csv(std::span<const SweepPoint> points) {
  std::string text = "env_step,median,p25,p75\n";
  for (const auto& p : points) {
    text += std::to_string(p.env_step) + ',' + format_double(p.median) + ',' +
            format_double(p.p25) + ',' + format_double(p.p75) + '\n';
  }
  return text;
}

std::vector<SweepPoint> run_sweep(const TrainConfig& config, std::span<const std::uint64_t> seeds,
                                  const fs::path& out_dir) {
  if (seeds.size() < 2) throw UsageError("sweep needs at least two seeds");
  std::vector<std::vector<MetricRow>> runs;
  for (std::uint64_t seed : seeds) {
    TrainConfig c = config;
    c.seed = seed;
    runs.push_back(run_experiment(c, out_dir / ("seed_" + std::to_string(seed))).rows);
  }
  auto points = aggregate_sweep(runs, config);
  write_file(out_dir / "sweep.csv", format_sweep_csv(points));
  return points;
}

}  // namespace haven
