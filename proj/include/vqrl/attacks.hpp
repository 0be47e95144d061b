#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vqrl/agent.hpp"
#include "vqrl/rng.hpp"

namespace vqrl::attacks {

using Vec = std::vector<double>;

enum class AttackKind { kRandom, kActionDiff, kMinQ, kRegression };

AttackKind attack_kind_from_string(const std::string& s);
std::string attack_kind_name(AttackKind k);

struct AttackConfig {
  AttackKind kind = AttackKind::kRandom;
  double eps = 0.0;
  int pgd_steps = 10;
  int pgd_restarts = 2;         // independent random starts; best result kept
  double pgd_step_size = -1.0;  // < 0: 2.5 * eps / steps
  std::uint64_t seed = 0;
  bool perturb_state_arg = false;  // Min Q variant: perturb Q's state input too
  bool transfer = false;           // compute gradients without the transform

  double step_size() const {
    return pgd_step_size > 0.0 ? pgd_step_size
                               : 2.5 * eps / static_cast<double>(pgd_steps);
  }
};

/// Loss and gradient w.r.t. the raw perturbed input x.
using LossGrad = std::function<double(std::span<const double> x, Vec* grad)>;

/// Sign-step PGD inside the l-inf ball around s, uniform random start.
/// The result always satisfies ||x - s||_inf <= eps.
Vec pgd(const LossGrad& loss_grad, std::span<const double> s, double eps,
        int steps, double step_size, bool maximize, Rng& rng);

Vec random_attack(std::span<const double> s, double eps, Rng& rng);

Vec action_diff_attack(const agent::SacAgent& agent, std::span<const double> s,
                       const AttackConfig& cfg, Rng& rng);
/// KL(pi(.|T(s)) || pi(.|T(s_hat))), for strength-ordering checks.
double action_diff_objective(const agent::SacAgent& agent, std::span<const double> s,
                             std::span<const double> s_hat);

Vec min_q_attack(const agent::SacAgent& agent, std::span<const double> s,
                 const AttackConfig& cfg, Rng& rng);
double min_q_objective(const agent::SacAgent& agent, std::span<const double> s,
                       std::span<const double> s_hat, bool perturb_state_arg = false);

/// Maximizes || predictor(T(s_hat)) - a_true ||^2 (toy regression attack).
Vec regression_attack(const nets::Mlp& predictor, const agent::Transform& transform,
                      std::span<const double> s, std::span<const double> a_true,
                      const AttackConfig& cfg, Rng& rng);

/// Dispatches on cfg.kind; regression is not valid here.
Vec attack_observation(const agent::SacAgent& agent, std::span<const double> s,
                       const AttackConfig& cfg, Rng& rng);

/// Per-step attack record for the eval module CSVs.
struct AttackRecord {
  std::size_t t = 0;
  double eps = 0.0;
  std::string kind;
  double linf_raw = 0.0;      // ||s_hat - s||_inf
  double l2_transformed = 0.0;  // ||T(s) - T(s_hat)||_2
};

}  // namespace vqrl::attacks
