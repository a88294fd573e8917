// Python bindings: configs, environments, the reward arithmetic and whole
// training runs. Tensors stay on the C++ side; everything crossing the
// boundary is plain lists and floats.

#include "haven/harness.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace haven;

namespace {

TrainConfig config_from_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

// Environment handles are owned by Python; reset/step return dicts so the
// result shape mirrors the C++ structs field for field.
py::dict reset_dict(const ResetResult& r) {
  py::dict d;
  d["state"] = r.state;
  d["observations"] = r.observations;
  return d;
}

py::dict step_dict(const StepResult& r) {
  py::dict d;
  d["reward"] = r.reward;
  d["observations"] = r.next_observations;
  d["state"] = r.next_state;
  d["terminated"] = r.terminated;
  d["truncated"] = r.truncated;
  d["info"] = r.info;
  return d;
}

}  // namespace

PYBIND11_MODULE(_haven, m) {
  m.doc() = "Hierarchical value decomposition for cooperative multi-agent RL";

  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<EnvError>(m, "EnvError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("rms_alpha", &TrainConfig::rms_alpha)
      .def_readwrite("rms_eps", &TrainConfig::rms_eps)
      .def_readwrite("grad_clip", &TrainConfig::grad_clip)
      .def_readwrite("target_update_episodes", &TrainConfig::target_update_episodes)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("buffer_capacity", &TrainConfig::buffer_capacity)
      .def_readwrite("gamma_h", &TrainConfig::gamma_h)
      .def_readwrite("gamma_l", &TrainConfig::gamma_l)
      .def_readwrite("epsilon_start", &TrainConfig::epsilon_start)
      .def_readwrite("epsilon_end", &TrainConfig::epsilon_end)
      .def_readwrite("epsilon_anneal_steps", &TrainConfig::epsilon_anneal_steps)
      .def_readwrite("k", &TrainConfig::k)
      .def_readwrite("n_macro_actions", &TrainConfig::n_macro_actions)
      .def_readwrite("hidden_dim", &TrainConfig::hidden_dim)
      .def_readwrite("mixer_embed_dim", &TrainConfig::mixer_embed_dim)
      .def_readwrite("hypernet_hidden_dim", &TrainConfig::hypernet_hidden_dim)
      .def_readwrite("value_target_uses_target_net", &TrainConfig::value_target_uses_target_net)
      .def_readwrite("total_env_steps", &TrainConfig::total_env_steps)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("env_id", &TrainConfig::env_id)
      .def_readwrite("env_params", &TrainConfig::env_params)
      .def_readwrite("eval_interval", &TrainConfig::eval_interval)
      .def_readwrite("eval_episodes", &TrainConfig::eval_episodes)
      .def_readwrite("dump_episodes", &TrainConfig::dump_episodes)
      .def_readwrite("record_wall_time", &TrainConfig::record_wall_time)
      .def_property(
          "algo", [](const TrainConfig& c) { return algo_name(c); },
          [](TrainConfig& c, const std::string& name) { apply_algo(c, name); })
      .def("to_ini", [](const TrainConfig& c) { return config_to_ini(c); })
      .def("__repr__", [](const TrainConfig& c) {
        return "<TrainConfig algo=" + algo_name(c) + " env=" + c.env_id + " seed=" +
               std::to_string(c.seed) + ">";
      });

  m.def("parse_config", &config_from_string, py::arg("text"));
  m.def("load_config", &load_config, py::arg("path"));
  m.def("algo_names", &algo_names);
  m.def("epsilon", &epsilon, py::arg("step"), py::arg("config"));
  m.def("derive_seed", &derive_seed, py::arg("seed"), py::arg("stream"), py::arg("index") = 0);

  m.def(
      "high_level_reward",
      [](const std::vector<double>& rewards) { return high_level_reward(rewards); },
      py::arg("segment_rewards"));
  m.def("advantage", &advantage, py::arg("segment_reward"), py::arg("value"),
        py::arg("next_value"), py::arg("terminal"), py::arg("gamma"));
  m.def("intrinsic_rewards", &intrinsic_rewards, py::arg("advantage"), py::arg("length"),
        py::arg("k"));
  m.def("monotonic_coefficient", &monotonic_coefficient, py::arg("gamma"), py::arg("k"));
  m.def("nearest_rank_percentile", &nearest_rank_percentile, py::arg("values"), py::arg("p"));

  py::class_<EnvSpec>(m, "EnvSpec")
      .def_readonly("n_agents", &EnvSpec::n_agents)
      .def_readonly("n_primitive_actions", &EnvSpec::n_primitive_actions)
      .def_readonly("obs_dim", &EnvSpec::obs_dim)
      .def_readonly("state_dim", &EnvSpec::state_dim)
      .def_readonly("episode_limit", &EnvSpec::episode_limit);

  py::class_<Environment>(m, "Environment")
      .def_property_readonly("id", &Environment::id)
      .def_property_readonly("spec", &Environment::spec)
      .def_property_readonly("done", &Environment::done)
      .def("reset", [](Environment& e, std::uint64_t seed) { return reset_dict(e.reset(seed)); },
           py::arg("seed"))
      .def("step",
           [](Environment& e, const std::vector<int>& joint) { return step_dict(e.step(joint)); },
           py::arg("joint_action"));
  m.def("make_environment", &make_environment, py::arg("id"), py::arg("params") = EnvParams{});

  py::class_<MetricRow>(m, "MetricRow")
      .def_readonly("env_step", &MetricRow::env_step)
      .def_readonly("episode", &MetricRow::episode)
      .def_readonly("epsilon", &MetricRow::epsilon)
      .def_readonly("loss_v", &MetricRow::loss_v)
      .def_readonly("loss_qh", &MetricRow::loss_qh)
      .def_readonly("loss_ql", &MetricRow::loss_ql)
      .def_readonly("train_return", &MetricRow::train_return)
      .def_readonly("eval_return_mean", &MetricRow::eval_return_mean)
      .def_readonly("eval_success_rate", &MetricRow::eval_success_rate)
      .def_readonly("wall_ms", &MetricRow::wall_ms);
  m.def("read_metrics_csv", &read_metrics_csv, py::arg("path"));

  // Releases the GIL for the duration of the run.
  m.def(
      "run_experiment",
      [](const TrainConfig& config, const std::filesystem::path& out_dir) {
        py::gil_scoped_release release;
        return run_experiment(config, out_dir).rows;
      },
      py::arg("config"), py::arg("out_dir"));

  m.attr("revision") = revision();
}
