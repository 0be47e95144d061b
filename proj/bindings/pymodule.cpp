// Python bindings for the core operations: per-dimension quantization,
// codebook training, environments, agents, attacks, and the robustness
// metrics. Thin wrappers over the C++ library; everything stays double
// precision and deterministic.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "vqrl/agent.hpp"
#include "vqrl/attacks.hpp"
#include "vqrl/envs.hpp"
#include "vqrl/eval.hpp"
#include "vqrl/toyreg.hpp"
#include "vqrl/vq.hpp"

namespace py = pybind11;
using namespace vqrl;

PYBIND11_MODULE(_vqrl, m) {
  m.doc() = "vector-quantized observation defenses for RL agents";

  // --- quantizer ------------------------------------------------------------
  py::class_<vq::PerDimCodebooks>(m, "PerDimCodebooks")
      .def_readonly("D", &vq::PerDimCodebooks::D)
      .def_readonly("K", &vq::PerDimCodebooks::K)
      .def_readonly("shared", &vq::PerDimCodebooks::shared)
      .def_readonly("items", &vq::PerDimCodebooks::items)
      .def("row", &vq::PerDimCodebooks::row, py::return_value_policy::copy);

  py::class_<vq::VqConfig>(m, "VqConfig")
      .def(py::init<>())
      .def_readwrite("K", &vq::VqConfig::K)
      .def_readwrite("alpha", &vq::VqConfig::alpha)
      .def_readwrite("codebook_lr", &vq::VqConfig::codebook_lr)
      .def_readwrite("lambda_lo", &vq::VqConfig::lambda_lo)
      .def_readwrite("lambda_hi", &vq::VqConfig::lambda_hi)
      .def_readwrite("shared", &vq::VqConfig::shared)
      .def_readwrite("adaptive_scale", &vq::VqConfig::adaptive_scale);

  m.def(
      "init_codebooks",
      [](const vq::Batch& warmup, std::size_t K, bool shared) {
        return vq::init_codebooks(warmup, K, shared);
      },
      py::arg("warmup"), py::arg("K"), py::arg("shared") = false,
      "quantile-initialized per-dimension codebooks");
  m.def(
      "quantize",
      [](const std::vector<double>& s, const vq::PerDimCodebooks& cb) {
        auto q = vq::quantize(s, cb);
        return py::make_tuple(q.values, q.assignments);
      },
      py::arg("s"), py::arg("codebooks"),
      "nearest item per dimension; returns (values, assignments)");
  m.def("vq_loss", &vq::vq_loss, py::arg("batch"), py::arg("codebooks"));
  m.def(
      "adaptive_scale",
      [](const std::vector<double>& q, double alpha, double lo, double hi) {
        return vq::adaptive_scale(q, alpha, lo, hi);
      },
      py::arg("q_values"), py::arg("alpha"), py::arg("clip_lo") = 0.0,
      py::arg("clip_hi") = 10.0);
  m.def("update_codebooks", &vq::update_codebooks, py::arg("batch"),
        py::arg("codebooks"), py::arg("lr"), py::arg("lambda_"));
  m.def(
      "attack_space_size",
      [](const std::vector<double>& s, double eps, const vq::PerDimCodebooks& cb) {
        auto a = vq::attack_space_size(s, eps, cb);
        return py::make_tuple(a.per_dim, a.log_total);
      },
      py::arg("s"), py::arg("eps"), py::arg("codebooks"),
      "reachable items per dimension and log of the product");
  m.def(
      "bdr_quantize",
      [](const std::vector<double>& s, int bits, const std::vector<double>& lo,
         const std::vector<double>& hi) {
        return vq::bdr_quantize(s, bits, vq::BdrRange{lo, hi});
      },
      py::arg("s"), py::arg("bits"), py::arg("lo"), py::arg("hi"));
  m.def("save_codebooks", &vq::save_codebooks_file, py::arg("codebooks"),
        py::arg("path"));
  m.def("load_codebooks", &vq::load_codebooks_file, py::arg("path"));

  // --- environments ---------------------------------------------------------
  py::class_<envs::EnvMetadata>(m, "EnvMetadata")
      .def_readonly("name", &envs::EnvMetadata::name)
      .def_readonly("obs_dim", &envs::EnvMetadata::obs_dim)
      .def_readonly("action_dim", &envs::EnvMetadata::action_dim)
      .def_readonly("action_lo", &envs::EnvMetadata::action_lo)
      .def_readonly("action_hi", &envs::EnvMetadata::action_hi)
      .def_readonly("r_min", &envs::EnvMetadata::r_min)
      .def_readonly("r_max", &envs::EnvMetadata::r_max)
      .def_readonly("horizon", &envs::EnvMetadata::horizon)
      .def("to_json", &envs::EnvMetadata::to_json);

  py::class_<envs::Env>(m, "Env")
      .def("metadata", &envs::Env::metadata, py::return_value_policy::copy)
      .def("reset", &envs::Env::reset, py::arg("seed"))
      .def(
          "step",
          [](envs::Env& env, const std::vector<double>& action) {
            auto t = env.step(action);
            return py::make_tuple(t.s_next, t.r, t.done);
          },
          py::arg("action"), "returns (next_obs, reward, done)");
  m.def("make_env", &envs::make_env, py::arg("name"));

  // --- agent ----------------------------------------------------------------
  py::class_<agent::AgentConfig>(m, "AgentConfig")
      .def(py::init<>())
      .def_readwrite("gamma", &agent::AgentConfig::gamma)
      .def_readwrite("tau", &agent::AgentConfig::tau)
      .def_readwrite("actor_lr", &agent::AgentConfig::actor_lr)
      .def_readwrite("critic_lr", &agent::AgentConfig::critic_lr)
      .def_readwrite("batch_size", &agent::AgentConfig::batch_size)
      .def_readwrite("hidden", &agent::AgentConfig::hidden)
      .def_readwrite("n_hidden", &agent::AgentConfig::n_hidden)
      .def_readwrite("entropy_coef", &agent::AgentConfig::entropy_coef)
      .def_readwrite("total_steps", &agent::AgentConfig::total_steps)
      .def_readwrite("warmup_steps", &agent::AgentConfig::warmup_steps)
      .def_readwrite("vq", &agent::AgentConfig::vq)
      .def_readwrite("bdr_bits", &agent::AgentConfig::bdr_bits)
      .def_readwrite("sa_reg_weight", &agent::AgentConfig::sa_reg_weight)
      .def_readwrite("sa_epsilon", &agent::AgentConfig::sa_epsilon)
      .def("validate", &agent::AgentConfig::validate)
      .def("transform_name", &agent::AgentConfig::transform_name);

  py::class_<agent::SacAgent>(m, "SacAgent")
      .def(py::init([](const envs::Env& env, const agent::AgentConfig& cfg,
                       std::uint64_t seed) {
             return agent::SacAgent(env.metadata(), cfg, seed);
           }),
           py::arg("env"), py::arg("config"), py::arg("seed"))
      .def("act",
           [](agent::SacAgent& a, const std::vector<double>& obs, bool det) {
             return a.act(obs, det);
           },
           py::arg("obs"), py::arg("deterministic") = true)
      .def("transform_obs",
           [](const agent::SacAgent& a, const std::vector<double>& obs) {
             return a.transform_obs(obs);
           },
           py::arg("obs"))
      .def("content_hash", &agent::SacAgent::content_hash)
      .def("save_json", &agent::SacAgent::save_json)
      .def_static("load_json", &agent::SacAgent::load_json, py::arg("text"))
      .def("config", &agent::SacAgent::config, py::return_value_policy::copy);

  m.def(
      "train",
      [](agent::SacAgent& a, envs::Env& env, std::uint64_t seed) {
        auto res = agent::train(a, env, seed);
        py::dict out;
        out["episode_returns"] = res.episode_returns;
        out["seconds_per_iteration"] = res.seconds_per_iteration;
        out["steps"] = res.log.size();
        return out;
      },
      py::arg("agent"), py::arg("env"), py::arg("seed"),
      "full training loop; returns summary statistics");

  // --- attacks --------------------------------------------------------------
  py::class_<attacks::AttackConfig>(m, "AttackConfig")
      .def(py::init<>())
      .def_readwrite("eps", &attacks::AttackConfig::eps)
      .def_readwrite("pgd_steps", &attacks::AttackConfig::pgd_steps)
      .def_readwrite("pgd_step_size", &attacks::AttackConfig::pgd_step_size)
      .def_readwrite("seed", &attacks::AttackConfig::seed)
      .def_readwrite("perturb_state_arg", &attacks::AttackConfig::perturb_state_arg)
      .def_readwrite("transfer", &attacks::AttackConfig::transfer);

  m.def(
      "attack_observation",
      [](agent::SacAgent& a, const std::vector<double>& s, const std::string& kind,
         attacks::AttackConfig cfg, std::uint64_t seed) {
        cfg.kind = attacks::attack_kind_from_string(kind);
        Rng rng(seed);
        return attacks::attack_observation(a, s, cfg, rng);
      },
      py::arg("agent"), py::arg("s"), py::arg("kind"), py::arg("config"),
      py::arg("seed"), "random | action_diff | min_q");
  m.def(
      "pgd",
      [](const std::function<py::tuple(std::vector<double>)>& loss_grad,
         const std::vector<double>& s, double eps, int steps, double step_size,
         bool maximize, std::uint64_t seed) {
        attacks::LossGrad lg = [&](std::span<const double> x,
                                   attacks::Vec* grad) {
          py::tuple r = loss_grad(std::vector<double>(x.begin(), x.end()));
          if (grad) *grad = r[1].cast<std::vector<double>>();
          return r[0].cast<double>();
        };
        Rng rng(seed);
        return attacks::pgd(lg, s, eps, steps, step_size, maximize, rng);
      },
      py::arg("loss_grad"), py::arg("s"), py::arg("eps"), py::arg("steps"),
      py::arg("step_size"), py::arg("maximize"), py::arg("seed"),
      "loss_grad(x) must return (loss, grad)");

  // --- evaluation -----------------------------------------------------------
  m.def(
      "evaluate_curve",
      [](agent::SacAgent& a, envs::Env& env, const std::string& attack,
         const std::vector<double>& grid, std::size_t episodes,
         std::uint64_t seed) {
        auto res = eval::evaluate_curve(
            a, env, attacks::attack_kind_from_string(attack), grid, episodes, seed);
        py::dict out;
        out["eps_grid"] = res.curve.eps_grid;
        out["returns"] = res.curve.returns;
        out["stds"] = res.curve.stds;
        return out;
      },
      py::arg("agent"), py::arg("env"), py::arg("attack"), py::arg("grid"),
      py::arg("episodes"), py::arg("seed"));
  m.def(
      "robustness_score",
      [](const std::vector<double>& grid, const std::vector<double>& returns,
         double r_min, double r_max) {
        eval::PerturbationCurve c;
        c.eps_grid = grid;
        c.returns = returns;
        c.stds.assign(returns.size(), 0.0);
        return eval::robustness_score(c, r_min, r_max).value;
      },
      py::arg("eps_grid"), py::arg("returns"), py::arg("r_min"), py::arg("r_max"),
      "mean of min-max-normalized returns, clipped to [0, 1]");
  m.def("spearman", &eval::spearman, py::arg("xs"), py::arg("ys"));
  m.def("default_eps_grid", &eval::default_eps_grid, py::arg("env_name"));
}
