#include "vqrl/toyreg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "vqrl/attacks.hpp"

namespace vqrl::toyreg {

using diff::Tape;

RegressionDataset generate_dataset(envs::Env& env, agent::SacAgent& expert,
                                   std::size_t n_transitions, std::uint64_t seed,
                                   double min_return) {
  // Gate on deterministic expert quality first.
  {
    double total = 0.0;
    const int probes = 5;
    for (int ep = 0; ep < probes; ++ep) {
      auto e = env.clone_fresh();
      envs::Vec obs = e->reset(seed * 977 + ep);
      bool done = false;
      while (!done) {
        envs::Transition tr = e->step(expert.act(obs, /*deterministic=*/true));
        total += tr.r;
        obs = tr.s_next;
        done = tr.done;
      }
    }
    double mean = total / probes;
    if (mean < min_return) {
      throw std::runtime_error(
          "generate_dataset: expert mean return " + std::to_string(mean) +
          " is below the required " + std::to_string(min_return) +
          "; train the expert longer");
    }
  }

  Rng rng(seed);
  RegressionDataset data;
  data.states.reserve(n_transitions);
  data.actions.reserve(n_transitions);

  const double noise = 0.1 * env.metadata().action_hi;
  auto e = env.clone_fresh();
  std::size_t episode = 0;
  envs::Vec obs = e->reset(seed * 1013 + episode);
  while (data.states.size() < n_transitions) {
    envs::Vec label = expert.act(obs, /*deterministic=*/true);
    data.states.push_back(obs);
    data.actions.push_back(label);
    envs::Vec a = label;
    for (double& v : a) {
      v = std::clamp(v + noise * rng.normal(), env.metadata().action_lo,
                     env.metadata().action_hi);
    }
    envs::Transition tr = e->step(a);
    if (tr.done) {
      ++episode;
      obs = e->reset(seed * 1013 + episode);
    } else {
      obs = tr.s_next;
    }
  }
  data.train_end = n_transitions * 9 / 10;
  return data;
}

Vec Regressor::predict(const Vec& state) const {
  Vec x = transform.apply(state);
  Tape t;
  int xi = t.input({1, x.size()}, {x.data(), x.size()});
  int out = net.forward(t, xi, /*as_leaf=*/false);
  auto v = t.values(out);
  return Vec(v.begin(), v.end());
}

Regressor train_regressor(const RegressionDataset& data, const RegressorConfig& cfg,
                          std::uint64_t seed) {
  if (data.train_end == 0 || data.train_end >= data.size()) {
    throw std::invalid_argument("train_regressor: dataset has no train/test split");
  }
  const std::size_t D = data.states.front().size();
  const std::size_t A = data.actions.front().size();

  Rng rng(seed);
  Regressor reg;
  reg.K = cfg.K;
  if (cfg.K) {
    reg.transform.kind = agent::TransformKind::kVq;
    reg.transform.vq_cfg.K = *cfg.K;
    vq::Batch train_states(data.states.begin(), data.states.begin() + data.train_end);
    reg.transform.fit(train_states);
  }
  reg.net = nets::Mlp(D, cfg.hidden, cfg.n_hidden, A, rng);
  nets::Adam opt(cfg.lr);
  auto params = reg.net.params();

  // Pre-transform the train split once; codebooks are frozen.
  std::vector<double> xs(data.train_end * D);
  std::vector<double> ys(data.train_end * A);
  for (std::size_t i = 0; i < data.train_end; ++i) {
    Vec tx = reg.transform.apply(data.states[i]);
    std::copy(tx.begin(), tx.end(), xs.begin() + i * D);
    std::copy(data.actions[i].begin(), data.actions[i].end(), ys.begin() + i * A);
  }

  const std::size_t B = std::min(cfg.batch_size, data.train_end);
  std::vector<double> bx(B * D), by(B * A);
  std::size_t iters_per_epoch = data.train_end / B;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t it = 0; it < iters_per_epoch; ++it) {
      for (std::size_t r = 0; r < B; ++r) {
        std::size_t i = rng.below(data.train_end);
        std::copy(xs.begin() + i * D, xs.begin() + (i + 1) * D, bx.begin() + r * D);
        std::copy(ys.begin() + i * A, ys.begin() + (i + 1) * A, by.begin() + r * A);
      }
      Tape t;
      int x = t.input({B, D}, bx);
      int pred = reg.net.forward(t, x, /*as_leaf=*/true);
      int loss = t.mean(t.square(t.sub(pred, t.input({B, A}, by))));
      double lv = t.value_scalar(loss);
      if (!std::isfinite(lv)) {
        throw std::runtime_error("train_regressor: diverged (non-finite loss) at epoch " +
                                 std::to_string(epoch));
      }
      nets::zero_grads(params);
      t.backward(loss);
      opt.step(params);
    }
  }
  return reg;
}

double test_mse(const Regressor& reg, const RegressionDataset& data) {
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = data.train_end; i < data.size(); ++i) {
    Vec pred = reg.predict(data.states[i]);
    for (std::size_t j = 0; j < pred.size(); ++j) {
      double d = pred[j] - data.actions[i][j];
      total += d * d;
    }
    ++n;
  }
  return total / static_cast<double>(n);
}

std::vector<SweepCell> attack_sweep(const std::vector<Regressor>& regressors,
                                    const RegressionDataset& data,
                                    const std::vector<double>& eps_grid,
                                    std::uint64_t seed) {
  std::vector<SweepCell> cells;
  for (const Regressor& reg : regressors) {
    std::vector<std::uint64_t> cb_hash_check;
    for (double eps : eps_grid) {
      attacks::AttackConfig cfg;
      cfg.kind = attacks::AttackKind::kRegression;
      cfg.eps = eps;
      Rng rng(seed ^ std::hash<double>{}(eps));

      double total = 0.0, total_sq = 0.0;
      std::size_t n = 0;
      for (std::size_t i = data.train_end; i < data.size(); ++i) {
        const Vec& s = data.states[i];
        const Vec& a = data.actions[i];
        Vec s_hat = eps == 0.0
                        ? s
                        : attacks::regression_attack(reg.net, reg.transform, s, a,
                                                     cfg, rng);
        Vec pred = reg.predict(s_hat);
        double mse = 0.0;
        for (std::size_t j = 0; j < pred.size(); ++j) {
          double d = pred[j] - a[j];
          mse += d * d;
        }
        total += mse;
        total_sq += mse * mse;
        ++n;
      }
      SweepCell cell;
      cell.K = reg.K;
      cell.eps = eps;
      cell.mean_mse = total / static_cast<double>(n);
      cell.std_mse = std::sqrt(std::max(
          0.0, total_sq / static_cast<double>(n) - cell.mean_mse * cell.mean_mse));
      cells.push_back(cell);
    }
  }
  return cells;
}

void write_sweep_csv(const std::vector<SweepCell>& cells, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_sweep_csv: cannot open " + path);
  os << "K,eps,mean_mse,std_mse\n";
  char buf[120];
  for (const SweepCell& c : cells) {
    std::string k = c.K ? std::to_string(*c.K) : "none";
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g\n", k.c_str(), c.eps,
                  c.mean_mse, c.std_mse);
    os << buf;
  }
}

}  // namespace vqrl::toyreg
