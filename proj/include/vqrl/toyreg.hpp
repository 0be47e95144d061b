#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vqrl/agent.hpp"
#include "vqrl/envs.hpp"
#include "vqrl/nets.hpp"
#include "vqrl/vq.hpp"

namespace vqrl::toyreg {

using Vec = std::vector<double>;

struct RegressionDataset {
  vq::Batch states;            // N x D
  std::vector<Vec> actions;    // N x A
  std::size_t train_end = 0;   // [0, train_end) train, [train_end, N) test

  std::size_t size() const { return states.size(); }
  std::size_t test_size() const { return states.size() - train_end; }
};

/// Rolls out the expert with Gaussian exploration noise and records
/// (state, deterministic expert action) pairs; 90/10 split.
/// Refuses experts whose mean deterministic return is below `min_return`.
RegressionDataset generate_dataset(envs::Env& env, agent::SacAgent& expert,
                                   std::size_t n_transitions, std::uint64_t seed,
                                   double min_return);

struct Regressor {
  nets::Mlp net;
  agent::Transform transform;  // identity or frozen quantile codebooks
  std::optional<std::size_t> K;

  Vec predict(const Vec& state) const;
};

struct RegressorConfig {
  std::optional<std::size_t> K;  // none: no VQ
  std::size_t hidden = 64;
  std::size_t n_hidden = 2;
  double lr = 1e-3;
  std::size_t epochs = 60;
  std::size_t batch_size = 128;
};

/// MSE training of transform(s) -> a; codebooks come from train-split
/// quantiles and stay frozen.
Regressor train_regressor(const RegressionDataset& data, const RegressorConfig& cfg,
                          std::uint64_t seed);

double test_mse(const Regressor& reg, const RegressionDataset& data);

struct SweepCell {
  std::optional<std::size_t> K;
  double eps = 0.0;
  double mean_mse = 0.0;
  double std_mse = 0.0;
};

/// Mean adversarial MSE over the test split per (variant, eps); the
/// attacker runs 10-step PGD per pair. Codebooks are never modified.
std::vector<SweepCell> attack_sweep(const std::vector<Regressor>& regressors,
                                    const RegressionDataset& data,
                                    const std::vector<double>& eps_grid,
                                    std::uint64_t seed);

void write_sweep_csv(const std::vector<SweepCell>& cells, const std::string& path);

}  // namespace vqrl::toyreg
