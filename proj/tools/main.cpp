// Experiment runner: train agents, sweep attacks, generate ablation and
// toy-regression data, and summarize results. Every command resolves its
// options (config file < command line), runs, and writes a manifest echo
// next to its outputs so runs can be reproduced byte for byte.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vqrl/agent.hpp"
#include "vqrl/attacks.hpp"
#include "vqrl/envs.hpp"
#include "vqrl/eval.hpp"
#include "vqrl/toyreg.hpp"
#include "vqrl/vq.hpp"

namespace fs = std::filesystem;
using namespace vqrl;

namespace {

// ---------------------------------------------------------------------------
// Small utilities

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 14695981039346656037ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write file: " + path);
  f << text;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += fmt_g17(v[i]);
  }
  return s;
}

template <class T>
std::string join_plain(const std::vector<T>& v) {
  std::ostringstream ss;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) ss << ",";
    ss << v[i];
  }
  return ss.str();
}

/// Resolved-config echo with a content hash over the echo text and the
/// binary itself; rerunning the same binary with the same manifest must
/// reproduce outputs byte for byte.
void write_manifest(const fs::path& dir, const std::string& command,
                    const std::map<std::string, std::string>& kv) {
  std::string text = "command=" + command + "\n";
  for (const auto& [k, v] : kv) text += k + "=" + v + "\n";
  std::uint64_t h = fnv1a(text.data(), text.size());
  std::error_code ec;
  std::string exe = fs::read_symlink("/proc/self/exe", ec).string();
  if (!ec) {
    std::string bytes = read_file(exe);
    h = fnv1a(bytes.data(), bytes.size(), h);
  }
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  text += std::string("content_hash=") + hex + "\n";
  write_file((dir / "manifest.txt").string(), text);
}

fs::path resolve_out_dir(const std::string& out_flag, const std::string& leaf) {
  if (!out_flag.empty()) return fs::path(out_flag);
  const char* root = std::getenv("VQRL_OUT_ROOT");
  return fs::path(root ? root : "runs") / leaf;
}

// ---------------------------------------------------------------------------
// Shared option bundles

struct VariantOpts {
  std::string variant = "none";  // none / bdr / vq / sa / sa-vq
  std::size_t K = 16;
  double alpha = 60.0;
  double codebook_lr = 1.0;
  bool shared = false;
  bool fixed_scale = false;
  int bdr_bits = 5;
  double sa_weight = 0.1;
  double sa_eps = 0.1;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--variant", variant, "none|bdr|vq|sa|sa-vq")
        ->check(CLI::IsMember({"none", "bdr", "vq", "sa", "sa-vq"}));
    cmd->add_option("--K", K, "codebook items per dimension");
    cmd->add_option("--alpha", alpha, "adaptive scale divisor");
    cmd->add_option("--codebook-lr", codebook_lr, "codebook learning rate");
    cmd->add_flag("--shared", shared, "one codebook pooled across dimensions");
    cmd->add_flag("--fixed-scale", fixed_scale, "pin the codebook-loss scale at 1");
    cmd->add_option("--bdr-bits", bdr_bits, "bit-depth reduction bits");
    cmd->add_option("--sa-weight", sa_weight, "smoothness regularizer weight");
    cmd->add_option("--sa-eps", sa_eps, "smoothness adversary budget");
  }

  void echo(std::map<std::string, std::string>& kv) const {
    kv["variant"] = variant;
    if (variant == "vq" || variant == "sa-vq") {
      kv["K"] = std::to_string(K);
      kv["alpha"] = fmt_g17(alpha);
      kv["codebook_lr"] = fmt_g17(codebook_lr);
      kv["shared"] = shared ? "1" : "0";
      kv["fixed_scale"] = fixed_scale ? "1" : "0";
    }
    if (variant == "bdr") kv["bdr_bits"] = std::to_string(bdr_bits);
    if (variant == "sa" || variant == "sa-vq") {
      kv["sa_weight"] = fmt_g17(sa_weight);
      kv["sa_eps"] = fmt_g17(sa_eps);
    }
  }
};

struct TrainOpts {
  std::size_t steps = 30000;
  std::size_t warmup = 5000;
  std::size_t hidden = 64;
  std::size_t n_hidden = 2;
  std::size_t batch = 256;
  double actor_lr = 3e-3;
  double critic_lr = 3e-3;
  double entropy = 0.05;
  double gamma = 0.99;
  double tau = 0.005;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--gamma", gamma, "discount factor");
    cmd->add_option("--tau", tau, "target smoothing coefficient");
    cmd->add_option("--steps", steps, "environment steps");
    cmd->add_option("--warmup", warmup, "random-action warmup steps");
    cmd->add_option("--hidden", hidden, "hidden width");
    cmd->add_option("--n-hidden", n_hidden, "hidden layers");
    cmd->add_option("--batch", batch, "mini-batch size");
    cmd->add_option("--actor-lr", actor_lr, "actor learning rate");
    cmd->add_option("--critic-lr", critic_lr, "critic learning rate");
    cmd->add_option("--entropy", entropy, "entropy coefficient");
  }

  void echo(std::map<std::string, std::string>& kv) const {
    kv["steps"] = std::to_string(steps);
    kv["warmup"] = std::to_string(warmup);
    kv["hidden"] = std::to_string(hidden);
    kv["n_hidden"] = std::to_string(n_hidden);
    kv["batch"] = std::to_string(batch);
    kv["actor_lr"] = fmt_g17(actor_lr);
    kv["critic_lr"] = fmt_g17(critic_lr);
    kv["entropy"] = fmt_g17(entropy);
    kv["gamma"] = fmt_g17(gamma);
    kv["tau"] = fmt_g17(tau);
  }
};

agent::AgentConfig make_agent_config(const VariantOpts& v, const TrainOpts& t) {
  agent::AgentConfig cfg;
  cfg.total_steps = t.steps;
  cfg.warmup_steps = t.warmup;
  cfg.hidden = t.hidden;
  cfg.n_hidden = t.n_hidden;
  cfg.batch_size = t.batch;
  cfg.actor_lr = t.actor_lr;
  cfg.critic_lr = t.critic_lr;
  cfg.entropy_coef = t.entropy;
  cfg.gamma = t.gamma;
  cfg.tau = t.tau;
  if (v.variant == "vq" || v.variant == "sa-vq") {
    vq::VqConfig q;
    q.K = v.K;
    q.alpha = v.alpha;
    q.codebook_lr = v.codebook_lr;
    q.shared = v.shared;
    q.adaptive_scale = !v.fixed_scale;
    cfg.vq = q;
  }
  if (v.variant == "bdr") cfg.bdr_bits = v.bdr_bits;
  if (v.variant == "sa" || v.variant == "sa-vq") {
    cfg.sa_reg_weight = v.sa_weight;
    cfg.sa_epsilon = v.sa_eps;
  }
  cfg.validate();
  return cfg;
}

agent::SacAgent load_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error("checkpoint not found: " + path);
  return agent::SacAgent::load_json(read_file(path));
}

agent::SacAgent train_one(const std::string& env_name, const agent::AgentConfig& cfg,
                          std::uint64_t seed, const fs::path& out_dir,
                          double* secs_per_iter = nullptr) {
  auto env = envs::make_env(env_name);
  agent::SacAgent ag(env->metadata(), cfg, seed);
  agent::TrainResult res = agent::train(ag, *env, seed);
  if (secs_per_iter) *secs_per_iter = res.seconds_per_iteration;
  if (!out_dir.empty()) {
    std::string tag = "_seed" + std::to_string(seed);
    write_file((out_dir / ("checkpoint" + tag + ".json")).string(), ag.save_json());
    agent::write_train_log_csv(res.log, (out_dir / ("train_log" + tag + ".csv")).string());
  }
  return ag;
}

eval::PerturbationCurve average_curves(const std::vector<eval::PerturbationCurve>& cs) {
  eval::PerturbationCurve out = cs.at(0);
  const std::size_t n = out.eps_grid.size();
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (const auto& c : cs) mean += c.returns[i];
    mean /= static_cast<double>(cs.size());
    double var = 0.0;
    for (const auto& c : cs) var += (c.returns[i] - mean) * (c.returns[i] - mean);
    out.returns[i] = mean;
    out.stds[i] = std::sqrt(var / static_cast<double>(cs.size()));
  }
  return out;
}

double natural_return(agent::SacAgent& ag, const std::string& env_name,
                      std::size_t episodes, std::uint64_t seed) {
  auto env = envs::make_env(env_name);
  auto res = eval::evaluate_curve(ag, *env, attacks::AttackKind::kRandom, {0.0},
                                  episodes, seed);
  return res.curve.returns[0];
}

// ---------------------------------------------------------------------------
// train

struct TrainCmd {
  std::string env_name;
  std::vector<std::uint64_t> seeds{0};
  std::string out;
  VariantOpts variant;
  TrainOpts topts;

  int run() {
    agent::AgentConfig cfg = make_agent_config(variant, topts);
    fs::path dir = resolve_out_dir(out, "train-" + env_name + "-" + variant.variant);
    fs::create_directories(dir);

    std::string timing = "variant,seed,seconds_per_iteration\n";
    for (std::uint64_t seed : seeds) {
      double spi = 0.0;
      agent::SacAgent ag = train_one(env_name, cfg, seed, dir, &spi);
      timing += variant.variant + "," + std::to_string(seed) + "," + fmt_g17(spi) + "\n";
      std::cout << "trained " << env_name << " variant=" << variant.variant
                << " seed=" << seed << " -> " << (dir / ("checkpoint_seed" + std::to_string(seed) + ".json")).string()
                << "\n";
    }
    write_file((dir / "timing.csv").string(), timing);

    std::map<std::string, std::string> kv;
    kv["env"] = env_name;
    kv["seeds"] = join_plain(seeds);
    variant.echo(kv);
    topts.echo(kv);
    write_manifest(dir, "train", kv);
    return 0;
  }
};

// ---------------------------------------------------------------------------
// eval

struct EvalCmd {
  std::string env_name;
  std::vector<std::string> checkpoints;  // variant=path, repeatable
  std::vector<std::string> attack_names{"random", "action_diff", "min_q"};
  std::vector<double> grid;
  std::size_t episodes = 20;
  std::uint64_t seed = 0;
  std::string out;

  int run() {
    if (grid.empty()) grid = eval::default_eps_grid(env_name);
    fs::path dir = resolve_out_dir(out, "eval-" + env_name);
    fs::create_directories(dir);

    // variant -> loaded agents (one per seed/checkpoint)
    std::vector<std::pair<std::string, std::vector<agent::SacAgent>>> groups;
    for (const std::string& spec : checkpoints) {
      auto pos = spec.find('=');
      if (pos == std::string::npos)
        throw std::runtime_error("--checkpoint expects variant=path, got: " + spec);
      std::string variant = spec.substr(0, pos);
      std::string path = spec.substr(pos + 1);
      auto it = std::find_if(groups.begin(), groups.end(),
                             [&](const auto& g) { return g.first == variant; });
      if (it == groups.end()) {
        groups.push_back({variant, {}});
        it = std::prev(groups.end());
      }
      it->second.push_back(load_checkpoint(path));
    }
    if (groups.empty()) throw std::runtime_error("no --checkpoint given");

    auto env = envs::make_env(env_name);
    const auto& meta = env->metadata();

    std::vector<eval::VariantRun> runs;
    std::map<std::string, std::vector<eval::EpisodeRecord>> pooled;
    for (auto& [variant, agents] : groups) {
      for (const std::string& atk : attack_names) {
        attacks::AttackKind kind = attacks::attack_kind_from_string(atk);
        std::vector<eval::PerturbationCurve> curves;
        for (std::size_t i = 0; i < agents.size(); ++i) {
          auto res = eval::evaluate_curve(agents[i], *env, kind, grid, episodes,
                                          seed + 1000 * i);
          curves.push_back(res.curve);
          auto& pool = pooled[variant];
          pool.insert(pool.end(), res.episodes.begin(), res.episodes.end());
        }
        runs.push_back({variant, atk, average_curves(curves)});
      }
    }

    eval::write_curves_csv(runs, (dir / "curves.csv").string());
    auto rows = eval::compare_variants(runs, meta.r_min, meta.r_max);
    eval::write_scores_csv(rows, (dir / "scores.csv").string());
    std::string table = eval::comparison_table_text(rows);
    write_file((dir / "table.txt").string(), table);
    std::cout << table;

    for (const auto& [variant, records] : pooled) {
      if (records.size() < 10) continue;  // below the correlation minimum
      double rho = eval::spearman_input_vs_gap(records);
      eval::write_correlation_csv(records, rho,
                                  (dir / ("correlation_" + variant + ".csv")).string());
    }

    std::map<std::string, std::string> kv;
    kv["env"] = env_name;
    kv["checkpoints"] = join_plain(checkpoints);
    kv["attacks"] = join_plain(attack_names);
    kv["grid"] = join_doubles(grid);
    kv["episodes"] = std::to_string(episodes);
    kv["seed"] = std::to_string(seed);
    write_manifest(dir, "eval", kv);
    return 0;
  }
};

// ---------------------------------------------------------------------------
// toyreg

struct ToyregCmd {
  std::string env_name = "pendulum";
  std::string expert_path;            // empty: train one here
  std::size_t expert_steps = 30000;
  double min_return = -300.0;
  std::size_t transitions = 4000;
  std::vector<std::size_t> Ks{4, 16};  // a no-quantizer run is always included
  std::vector<double> grid{0.0, 0.05, 0.1, 0.2, 0.3};
  std::size_t epochs = 60;
  std::uint64_t seed = 0;
  std::string out;

  int run() {
    fs::path dir = resolve_out_dir(out, "toyreg-" + env_name);
    fs::create_directories(dir);

    agent::SacAgent expert = [&] {
      if (!expert_path.empty()) return load_checkpoint(expert_path);
      VariantOpts v;
      TrainOpts t;
      t.steps = expert_steps;
      t.warmup = std::min<std::size_t>(5000, expert_steps / 2);
      return train_one(env_name, make_agent_config(v, t), seed, fs::path());
    }();

    auto env = envs::make_env(env_name);
    auto data = toyreg::generate_dataset(*env, expert, transitions, seed, min_return);

    std::vector<toyreg::Regressor> regressors;
    {
      toyreg::RegressorConfig rc;
      rc.epochs = epochs;
      regressors.push_back(toyreg::train_regressor(data, rc, seed));
      for (std::size_t K : Ks) {
        rc.K = K;
        regressors.push_back(toyreg::train_regressor(data, rc, seed));
      }
    }
    auto cells = toyreg::attack_sweep(regressors, data, grid, seed);
    toyreg::write_sweep_csv(cells, (dir / "sweep.csv").string());
    std::cout << "wrote " << (dir / "sweep.csv").string() << "\n";

    std::map<std::string, std::string> kv;
    kv["env"] = env_name;
    kv["expert"] = expert_path.empty() ? ("trained:" + std::to_string(expert_steps))
                                       : expert_path;
    kv["min_return"] = fmt_g17(min_return);
    kv["transitions"] = std::to_string(transitions);
    kv["Ks"] = join_plain(Ks);
    kv["grid"] = join_doubles(grid);
    kv["epochs"] = std::to_string(epochs);
    kv["seed"] = std::to_string(seed);
    write_manifest(dir, "toyreg", kv);
    return 0;
  }
};

// ---------------------------------------------------------------------------
// ablate

struct AblateCmd {
  std::string kind;
  std::string env_name = "pendulum";
  std::vector<std::uint64_t> seeds{0};
  std::vector<std::size_t> Ks{4, 8, 16, 32};
  std::string attack = "action_diff";
  std::vector<double> grid;
  std::size_t episodes = 20;
  std::string out;
  VariantOpts variant;  // base settings for the trained agents
  TrainOpts topts;
  ToyregCmd toyreg_cmd;

  eval::VariantRun sweep_variant(const std::string& label,
                                 const agent::AgentConfig& cfg,
                                 std::map<std::string, std::vector<eval::EpisodeRecord>>* pool) {
    attacks::AttackKind kindv = attacks::attack_kind_from_string(attack);
    auto env = envs::make_env(env_name);
    std::vector<eval::PerturbationCurve> curves;
    for (std::uint64_t seed : seeds) {
      agent::SacAgent ag = train_one(env_name, cfg, seed, fs::path());
      auto res = eval::evaluate_curve(ag, *env, kindv, grid, episodes, seed);
      curves.push_back(res.curve);
      if (pool) {
        auto& v = (*pool)[label];
        v.insert(v.end(), res.episodes.begin(), res.episodes.end());
      }
    }
    return {label, attack, average_curves(curves)};
  }

  int run() {
    if (grid.empty()) grid = eval::default_eps_grid(env_name);
    fs::path dir = resolve_out_dir(out, "ablate-" + kind + "-" + env_name);
    fs::create_directories(dir);
    auto meta = envs::make_env(env_name)->metadata();

    std::map<std::string, std::string> kv;
    kv["kind"] = kind;
    kv["env"] = env_name;
    kv["seeds"] = join_plain(seeds);
    kv["attack"] = attack;
    kv["grid"] = join_doubles(grid);
    kv["episodes"] = std::to_string(episodes);
    topts.echo(kv);

    if (kind == "codebook-size") {
      kv["Ks"] = join_plain(Ks);
      std::vector<eval::VariantRun> runs;
      for (std::size_t K : Ks) {
        VariantOpts v = variant;
        v.variant = "vq";
        v.K = K;
        runs.push_back(sweep_variant("K=" + std::to_string(K),
                                     make_agent_config(v, topts), nullptr));
      }
      eval::write_curves_csv(runs, (dir / "codebook_size.csv").string());
      auto rows = eval::compare_variants(runs, meta.r_min, meta.r_max);
      eval::write_scores_csv(rows, (dir / "codebook_size_scores.csv").string());
      std::cout << eval::comparison_table_text(rows);
    } else if (kind == "shared-codebook") {
      std::vector<eval::VariantRun> runs;
      for (bool shared : {false, true}) {
        VariantOpts v = variant;
        v.variant = "vq";
        v.shared = shared;
        runs.push_back(sweep_variant(shared ? "shared" : "separate",
                                     make_agent_config(v, topts), nullptr));
      }
      eval::write_curves_csv(runs, (dir / "shared_codebook.csv").string());
      auto rows = eval::compare_variants(runs, meta.r_min, meta.r_max);
      eval::write_scores_csv(rows, (dir / "shared_codebook_scores.csv").string());
      std::cout << eval::comparison_table_text(rows);
    } else if (kind == "adaptive-scale") {
      std::string csv = "variant,seed,natural_return\n";
      for (bool fixed : {false, true}) {
        VariantOpts v = variant;
        v.variant = "vq";
        v.fixed_scale = fixed;
        agent::AgentConfig cfg = make_agent_config(v, topts);
        for (std::uint64_t seed : seeds) {
          agent::SacAgent ag = train_one(env_name, cfg, seed, fs::path());
          double nat = natural_return(ag, env_name, episodes, seed);
          csv += std::string(fixed ? "fixed" : "adaptive") + "," +
                 std::to_string(seed) + "," + fmt_g17(nat) + "\n";
        }
      }
      write_file((dir / "adaptive_scale.csv").string(), csv);
      std::cout << csv;
    } else if (kind == "spearman") {
      VariantOpts v = variant;
      v.variant = "vq";
      std::map<std::string, std::vector<eval::EpisodeRecord>> pool;
      auto run = sweep_variant("vq", make_agent_config(v, topts), &pool);
      eval::write_curves_csv({run}, (dir / "spearman_curves.csv").string());
      const auto& records = pool["vq"];
      double rho = eval::spearman_input_vs_gap(records);
      eval::write_correlation_csv(records, rho, (dir / "correlation.csv").string());
      std::cout << "spearman rho=" << fmt_g17(rho) << "\n";
    } else if (kind == "toyreg") {
      toyreg_cmd.env_name = env_name;
      toyreg_cmd.out = (dir).string();
      return toyreg_cmd.run();
    } else {
      throw CLI::ValidationError("--kind", "unknown ablation kind: " + kind);
    }

    write_manifest(dir, "ablate", kv);
    return 0;
  }
};

// ---------------------------------------------------------------------------
// report

int run_report(const std::string& dir_flag) {
  fs::path dir(dir_flag);
  bool printed = false;
  fs::path table = dir / "table.txt";
  if (fs::exists(table)) {
    std::cout << read_file(table.string());
    printed = true;
  } else {
    for (const char* name : {"scores.csv", "codebook_size_scores.csv",
                             "shared_codebook_scores.csv", "adaptive_scale.csv",
                             "sweep.csv", "correlation.csv"}) {
      fs::path p = dir / name;
      if (fs::exists(p)) {
        std::cout << "# " << name << "\n" << read_file(p.string()) << "\n";
        printed = true;
      }
    }
  }
  fs::path timing = dir / "timing.csv";
  if (fs::exists(timing)) {
    std::cout << "# timing.csv (mean seconds per iteration)\n"
              << read_file(timing.string());
    printed = true;
  }
  if (!printed) throw std::runtime_error("no result files found under: " + dir_flag);
  return 0;
}

/// Expands `--config FILE` into ordinary option tokens: each `key=value`
/// line becomes `--key=value` unless the same flag was already given on
/// the command line, so explicit flags always win.
std::vector<std::string> expand_config_args(std::vector<std::string> args) {
  std::string path;
  for (auto it = args.begin(); it != args.end();) {
    if (*it == "--config") {
      if (std::next(it) == args.end())
        throw std::runtime_error("--config needs a file path");
      path = *std::next(it);
      it = args.erase(it, it + 2);
    } else if (it->rfind("--config=", 0) == 0) {
      path = it->substr(9);
      it = args.erase(it);
    } else {
      ++it;
    }
  }
  if (path.empty()) return args;

  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read config file: " + path);
  auto trim = [](std::string s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  std::string line;
  std::vector<std::string> extra;
  while (std::getline(f, line)) {
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line is not key=value: " + line);
    std::string flag = "--" + trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    bool overridden = false;
    for (const auto& a : args) {
      if (a == flag || a.rfind(flag + "=", 0) == 0) {
        overridden = true;
        break;
      }
    }
    if (!overridden) extra.push_back(flag + "=" + val);
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

std::string config_sink;  // --config is consumed before parsing; kept for --help

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vector-quantized observation defenses: experiment runner"};
  app.require_subcommand(1);

  TrainCmd train_cmd;
  EvalCmd eval_cmd;
  ToyregCmd toyreg_cmd;
  AblateCmd ablate_cmd;
  std::string report_dir;

  auto* train = app.add_subcommand("train", "train agents and write checkpoints");
  train->add_option("--config", config_sink, "flat key=value config file; command-line flags win");
  train->add_option("--env", train_cmd.env_name, "pendulum|reacher")->required();
  train->add_option("--seed", train_cmd.seeds, "seeds (repeat or comma separated)")
      ->delimiter(',');
  train->add_option("--out", train_cmd.out, "output directory");
  train_cmd.variant.add_to(train);
  train_cmd.topts.add_to(train);

  auto* evalc = app.add_subcommand("eval", "attack sweeps over trained checkpoints");
  evalc->add_option("--config", config_sink, "flat key=value config file; command-line flags win");
  evalc->add_option("--env", eval_cmd.env_name, "pendulum|reacher")->required();
  evalc->add_option("--checkpoint", eval_cmd.checkpoints,
                    "variant=path (repeatable; same variant pools seeds)")
      ->required();
  evalc->add_option("--attack", eval_cmd.attack_names, "random|action_diff|min_q")
      ->delimiter(',');
  evalc->add_option("--grid", eval_cmd.grid, "attack budgets, must start at 0")
      ->delimiter(',');
  evalc->add_option("--episodes", eval_cmd.episodes, "episodes per grid point");
  evalc->add_option("--seed", eval_cmd.seed, "evaluation seed");
  evalc->add_option("--out", eval_cmd.out, "output directory");

  auto* toyreg = app.add_subcommand("toyreg", "behavior-cloning attack sweep");
  toyreg->add_option("--config", config_sink, "flat key=value config file; command-line flags win");
  toyreg->add_option("--env", toyreg_cmd.env_name, "pendulum|reacher");
  toyreg->add_option("--expert", toyreg_cmd.expert_path,
                     "expert checkpoint (default: train one)");
  toyreg->add_option("--expert-steps", toyreg_cmd.expert_steps,
                     "training steps when no expert is given");
  toyreg->add_option("--min-return", toyreg_cmd.min_return,
                     "reject experts whose mean return is below this");
  toyreg->add_option("--transitions", toyreg_cmd.transitions, "dataset size");
  toyreg->add_option("--K", toyreg_cmd.Ks, "codebook sizes to compare")
      ->delimiter(',');
  toyreg->add_option("--grid", toyreg_cmd.grid, "attack budgets")->delimiter(',');
  toyreg->add_option("--epochs", toyreg_cmd.epochs, "regression epochs");
  toyreg->add_option("--seed", toyreg_cmd.seed, "seed");
  toyreg->add_option("--out", toyreg_cmd.out, "output directory");

  auto* ablate = app.add_subcommand("ablate", "component ablation data files");
  ablate->add_option("--config", config_sink, "flat key=value config file; command-line flags win");
  ablate->add_option("--kind", ablate_cmd.kind,
                     "codebook-size|shared-codebook|adaptive-scale|spearman|toyreg")
      ->required()
      ->check(CLI::IsMember({"codebook-size", "shared-codebook", "adaptive-scale",
                             "spearman", "toyreg"}));
  ablate->add_option("--env", ablate_cmd.env_name, "pendulum|reacher");
  ablate->add_option("--seed", ablate_cmd.seeds, "seeds")->delimiter(',');
  ablate->add_option("--Ks", ablate_cmd.Ks, "codebook-size sweep values")
      ->delimiter(',');
  ablate->add_option("--attack", ablate_cmd.attack, "attack for the sweeps");
  ablate->add_option("--grid", ablate_cmd.grid, "attack budgets")->delimiter(',');
  ablate->add_option("--episodes", ablate_cmd.episodes, "episodes per grid point");
  ablate->add_option("--out", ablate_cmd.out, "output directory");
  ablate_cmd.variant.add_to(ablate);
  ablate_cmd.topts.add_to(ablate);

  auto* report = app.add_subcommand("report", "print result tables from a run directory");
  report->add_option("--dir", report_dir, "run output directory")->required();

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = expand_config_args(std::move(args));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::reverse(args.begin(), args.end());  // parse(vector) takes reversed args

  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage errors exit 1
  }

  try {
    if (*train) return train_cmd.run();
    if (*evalc) return eval_cmd.run();
    if (*toyreg) return toyreg_cmd.run();
    if (*ablate) return ablate_cmd.run();
    if (*report) return run_report(report_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
