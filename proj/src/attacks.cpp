#include "vqrl/attacks.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace vqrl::attacks {

AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "random") return AttackKind::kRandom;
  if (s == "action_diff") return AttackKind::kActionDiff;
  if (s == "min_q") return AttackKind::kMinQ;
  if (s == "regression") return AttackKind::kRegression;
  throw std::invalid_argument("unknown attack kind '" + s + "'");
}

std::string attack_kind_name(AttackKind k) {
  switch (k) {
    case AttackKind::kRandom: return "random";
    case AttackKind::kActionDiff: return "action_diff";
    case AttackKind::kMinQ: return "min_q";
    case AttackKind::kRegression: return "regression";
  }
  return "?";
}

Vec pgd(const LossGrad& loss_grad, std::span<const double> s, double eps,
        int steps, double step_size, bool maximize, Rng& rng) {
  if (eps < 0.0) throw std::invalid_argument("pgd: eps must be >= 0");
  if (steps < 1) throw std::invalid_argument("pgd: steps must be >= 1");
  Vec x(s.begin(), s.end());
  if (eps == 0.0) return x;
  for (double& v : x) v += rng.uniform(-eps, eps);
  const double dir = maximize ? 1.0 : -1.0;
  // Best-iterate PGD: sign steps are not monotone in the objective, so the
  // returned point is the best iterate visited, not the last one.
  Vec best = x;
  double best_score = -std::numeric_limits<double>::infinity();
  Vec grad;
  for (int it = 0; it < steps; ++it) {
    double loss = loss_grad(x, &grad);
    if (!std::isfinite(loss)) {
      throw std::runtime_error("pgd: non-finite loss at step " + std::to_string(it));
    }
    if (dir * loss > best_score) {
      best_score = dir * loss;
      best = x;
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::isfinite(grad[i])) {
        throw std::runtime_error("pgd: non-finite gradient at step " +
                                 std::to_string(it) + ", dim " + std::to_string(i));
      }
      double g = grad[i];
      x[i] += dir * step_size * (g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0));
      x[i] = std::clamp(x[i], s[i] - eps, s[i] + eps);
    }
  }
  if (dir * loss_grad(x, nullptr) > best_score) best = x;
  x = best;
#ifndef NDEBUG
  for (std::size_t i = 0; i < x.size(); ++i) {
    assert(std::abs(x[i] - s[i]) <= eps);
  }
#endif
  return x;
}

Vec random_attack(std::span<const double> s, double eps, Rng& rng) {
  if (eps < 0.0) throw std::invalid_argument("random_attack: eps must be >= 0");
  Vec x(s.begin(), s.end());
  for (double& v : x) v += rng.uniform(-eps, eps);
  return x;
}

namespace {

agent::Vec maybe_transform(const agent::SacAgent& a, std::span<const double> x,
                           bool transfer) {
  if (transfer) return agent::Vec(x.begin(), x.end());
  return a.transform_obs(x);
}

/// Best of `cfg.pgd_restarts` independent PGD runs, ranked by the loss.
Vec pgd_with_restarts(const LossGrad& lg, std::span<const double> s,
                      const AttackConfig& cfg, bool maximize, Rng& rng) {
  const int restarts = std::max(1, cfg.pgd_restarts);
  const double dir = maximize ? 1.0 : -1.0;
  Vec best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Vec x = pgd(lg, s, cfg.eps, cfg.pgd_steps, cfg.step_size(), maximize, rng);
    const double score = dir * lg(x, nullptr);
    if (score > best_score) {
      best_score = score;
      best = std::move(x);
    }
  }
  return best;
}

}  // namespace

Vec action_diff_attack(const agent::SacAgent& agent_, std::span<const double> s,
                       const AttackConfig& cfg, Rng& rng) {
  agent::Vec s_t = maybe_transform(agent_, s, cfg.transfer);
  agent::SacAgent::PolicyDist ref = agent_.policy_dist(s_t);
  LossGrad lg = [&](std::span<const double> x, Vec* grad) {
    agent::Vec x_t = maybe_transform(agent_, x, cfg.transfer);
    // Gradient w.r.t. the transformed input passes straight through.
    return agent_.kl_from_ref(ref, x_t, grad);
  };
  return pgd_with_restarts(lg, s, cfg, /*maximize=*/true, rng);
}

double action_diff_objective(const agent::SacAgent& agent_, std::span<const double> s,
                             std::span<const double> s_hat) {
  agent::Vec s_t = agent_.transform_obs(s);
  agent::Vec sh_t = agent_.transform_obs(s_hat);
  agent::SacAgent::PolicyDist ref = agent_.policy_dist(s_t);
  return agent_.kl_from_ref(ref, sh_t, nullptr);
}

Vec min_q_attack(const agent::SacAgent& agent_, std::span<const double> s,
                 const AttackConfig& cfg, Rng& rng) {
  agent::Vec s_t = maybe_transform(agent_, s, cfg.transfer);
  LossGrad lg = [&](std::span<const double> x, Vec* grad) {
    agent::Vec x_t = maybe_transform(agent_, x, cfg.transfer);
    if (cfg.perturb_state_arg) {
      Vec gp, gs;
      double q = agent_.q_of_policy_action(x_t, x_t, &gp, &gs);
      if (grad) {
        grad->resize(gp.size());
        for (std::size_t i = 0; i < gp.size(); ++i) (*grad)[i] = gp[i] + gs[i];
      }
      return q;
    }
    // Q's state argument stays clean; the perturbation enters through the
    // policy's action only.
    return agent_.q_of_policy_action(s_t, x_t, grad);
  };
  return pgd_with_restarts(lg, s, cfg, /*maximize=*/false, rng);
}

double min_q_objective(const agent::SacAgent& agent_, std::span<const double> s,
                       std::span<const double> s_hat, bool perturb_state_arg) {
  agent::Vec s_t = agent_.transform_obs(s);
  agent::Vec sh_t = agent_.transform_obs(s_hat);
  return perturb_state_arg ? agent_.q_of_policy_action(sh_t, sh_t, nullptr)
                           : agent_.q_of_policy_action(s_t, sh_t, nullptr);
}

Vec regression_attack(const nets::Mlp& predictor, const agent::Transform& transform,
                      std::span<const double> s, std::span<const double> a_true,
                      const AttackConfig& cfg, Rng& rng) {
  LossGrad lg = [&](std::span<const double> x, Vec* grad) {
    agent::Vec x_t = cfg.transfer ? agent::Vec(x.begin(), x.end()) : transform.apply(x);
    diff::Tape t;
    int xi = t.input({1, x_t.size()}, {x_t.data(), x_t.size()});
    int pred = predictor.forward(t, xi, /*as_leaf=*/false);
    int target = t.input({1, a_true.size()}, a_true);
    int loss = t.sum(t.square(t.sub(pred, target)));
    double v = t.value_scalar(loss);
    if (grad) {
      t.backward(loss);
      auto g = t.grad(xi);
      grad->assign(g.begin(), g.end());
    }
    return v;
  };
  return pgd_with_restarts(lg, s, cfg, /*maximize=*/true, rng);
}

Vec attack_observation(const agent::SacAgent& agent_, std::span<const double> s,
                       const AttackConfig& cfg, Rng& rng) {
  switch (cfg.kind) {
    case AttackKind::kRandom: return random_attack(s, cfg.eps, rng);
    case AttackKind::kActionDiff: return action_diff_attack(agent_, s, cfg, rng);
    case AttackKind::kMinQ: return min_q_attack(agent_, s, cfg, rng);
    case AttackKind::kRegression:
      throw std::invalid_argument("attack_observation: regression attack needs a predictor");
  }
  throw std::logic_error("attack_observation: bad kind");
}

}  // namespace vqrl::attacks
