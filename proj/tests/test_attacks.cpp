#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "vqrl/agent.hpp"
#include "vqrl/attacks.hpp"
#include "vqrl/envs.hpp"
#include "vqrl/rng.hpp"

using namespace vqrl;
using attacks::AttackConfig;
using attacks::AttackKind;
using attacks::Vec;
using envs::PendulumEnv;

namespace {

agent::SacAgent make_agent(std::uint64_t seed, bool with_vq = false) {
  PendulumEnv env;
  agent::AgentConfig cfg;
  cfg.hidden = 16;
  cfg.n_hidden = 1;
  if (with_vq) {
    cfg.vq = vq::VqConfig{};
    cfg.vq->K = 8;
  }
  agent::SacAgent a(env.metadata(), cfg, seed);
  if (with_vq) {
    Rng rng(seed + 100);
    vq::Batch warmup;
    for (int i = 0; i < 300; ++i)
      warmup.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                        rng.uniform(-8.0, 8.0)});
    a.mutable_transform().fit(warmup);
  }
  return a;
}

Vec random_state(Rng& rng) {
  return {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-8.0, 8.0)};
}

double linf(const Vec& a, const Vec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("attack kind names round trip") {
  for (auto k : {AttackKind::kRandom, AttackKind::kActionDiff, AttackKind::kMinQ,
                 AttackKind::kRegression}) {
    CHECK(attacks::attack_kind_from_string(attacks::attack_kind_name(k)) == k);
  }
  CHECK_THROWS_AS(attacks::attack_kind_from_string("bogus"), std::invalid_argument);
}

TEST_CASE("default pgd step size is 2.5 eps over steps") {
  AttackConfig cfg;
  cfg.eps = 0.2;
  cfg.pgd_steps = 10;
  CHECK(cfg.step_size() == doctest::Approx(0.05));
  cfg.pgd_step_size = 0.01;
  CHECK(cfg.step_size() == doctest::Approx(0.01));
}

TEST_CASE("pgd hand trace: maximizing (x-2)^2 over [-0.1, 0.1] lands at -0.1") {
  attacks::LossGrad lg = [](std::span<const double> x, Vec* g) {
    if (g) (*g) = Vec{2.0 * (x[0] - 2.0)};
    return (x[0] - 2.0) * (x[0] - 2.0);
  };
  Rng rng(5);
  Vec s{0.0};
  Vec x = attacks::pgd(lg, s, 0.1, 10, 0.025, /*maximize=*/true, rng);
  CHECK(x[0] == doctest::Approx(-0.1).epsilon(1e-12));
}

TEST_CASE("pgd with eps 0 returns the anchor exactly") {
  attacks::LossGrad lg = [](std::span<const double> x, Vec* g) {
    if (g) (*g) = Vec{1.0, 1.0};
    return x[0] + x[1];
  };
  Rng rng(1);
  Vec s{0.3, -0.4};
  CHECK(attacks::pgd(lg, s, 0.0, 10, 0.0, true, rng) == s);
}

TEST_CASE("pgd never leaves the ball") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    Vec c = random_state(rng);
    attacks::LossGrad lg = [&](std::span<const double> x, Vec* g) {
      double l = 0.0;
      if (g) g->assign(x.size(), 0.0);
      for (std::size_t i = 0; i < x.size(); ++i) {
        l += (x[i] - c[i]) * (x[i] - c[i]);
        if (g) (*g)[i] = 2.0 * (x[i] - c[i]);
      }
      return l;
    };
    Vec s = random_state(rng);
    double eps = rng.uniform(0.0, 0.5);
    Vec x = attacks::pgd(lg, s, eps, 5, 2.5 * eps / 5.0, trial % 2 == 0, rng);
    CHECK(linf(x, s) <= eps + 1e-12);
  }
}

TEST_CASE("one big step equals the fast gradient sign method on a linear loss") {
  attacks::LossGrad lg = [](std::span<const double> x, Vec* g) {
    if (g) (*g) = Vec{3.0, -1.0};
    return 3.0 * x[0] - x[1];
  };
  Rng rng(9);
  Vec s{0.5, 0.5};
  Vec x = attacks::pgd(lg, s, 0.1, 1, 0.25, true, rng);  // step >= 2 eps
  CHECK(x[0] == doctest::Approx(0.6));
  CHECK(x[1] == doctest::Approx(0.4));
}

TEST_CASE("attacks are deterministic given the seed") {
  auto agent = make_agent(31);
  Rng probe(2);
  Vec s = random_state(probe);
  for (auto kind : {AttackKind::kRandom, AttackKind::kActionDiff, AttackKind::kMinQ}) {
    AttackConfig cfg;
    cfg.kind = kind;
    cfg.eps = 0.1;
    Rng r1(77), r2(77);
    CHECK(attacks::attack_observation(agent, s, cfg, r1) ==
          attacks::attack_observation(agent, s, cfg, r2));
  }
}

TEST_CASE("random attack stays in the ball and uses the full range") {
  Rng rng(3);
  Vec s{0.0, 0.0, 0.0};
  double max_seen = 0.0;
  for (int i = 0; i < 200; ++i) {
    Vec x = attacks::random_attack(s, 0.2, rng);
    CHECK(linf(x, s) <= 0.2 + 1e-15);
    max_seen = std::max(max_seen, linf(x, s));
  }
  CHECK(max_seen > 0.15);
}

TEST_CASE("kl objective is zero at the clean state and the attack beats random") {
  auto agent = make_agent(41);
  Rng rng(13);
  int wins = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Vec s = random_state(rng);
    CHECK(attacks::action_diff_objective(agent, s, s) ==
          doctest::Approx(0.0).epsilon(1e-10));
    AttackConfig cfg;
    cfg.kind = AttackKind::kActionDiff;
    cfg.eps = 0.2;
    Rng ra(trial), rr(trial + 500);
    Vec adv = attacks::action_diff_attack(agent, s, cfg, ra);
    Vec rnd = attacks::random_attack(s, 0.2, rr);
    if (attacks::action_diff_objective(agent, s, adv) >=
        attacks::action_diff_objective(agent, s, rnd))
      ++wins;
  }
  CHECK(wins >= 15);
}

TEST_CASE("min q attack drives the critic lower than a random perturbation") {
  auto agent = make_agent(43);
  Rng rng(14);
  int wins = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Vec s = random_state(rng);
    AttackConfig cfg;
    cfg.kind = AttackKind::kMinQ;
    cfg.eps = 0.2;
    Rng ra(trial), rr(trial + 900);
    Vec adv = attacks::min_q_attack(agent, s, cfg, ra);
    Vec rnd = attacks::random_attack(s, 0.2, rr);
    if (attacks::min_q_objective(agent, s, adv) <=
        attacks::min_q_objective(agent, s, rnd))
      ++wins;
  }
  CHECK(wins >= 15);
}

TEST_CASE("min q state-argument variant is exposed and differs in general") {
  auto agent = make_agent(47);
  Rng rng(15);
  Vec s = random_state(rng);
  AttackConfig cfg;
  cfg.kind = AttackKind::kMinQ;
  cfg.eps = 0.3;
  Rng r1(5);
  Vec a = attacks::min_q_attack(agent, s, cfg, r1);
  cfg.perturb_state_arg = true;
  Rng r2(5);
  Vec b = attacks::min_q_attack(agent, s, cfg, r2);
  CHECK(linf(a, s) <= 0.3 + 1e-12);
  CHECK(linf(b, s) <= 0.3 + 1e-12);
  // Objectives are well defined for both conventions.
  CHECK(std::isfinite(attacks::min_q_objective(agent, s, a, false)));
  CHECK(std::isfinite(attacks::min_q_objective(agent, s, b, true)));
}

TEST_CASE("attacks on a quantized agent stay valid") {
  auto agent = make_agent(53, /*with_vq=*/true);
  Rng rng(16);
  for (int trial = 0; trial < 10; ++trial) {
    Vec s = random_state(rng);
    AttackConfig cfg;
    cfg.kind = trial % 2 == 0 ? AttackKind::kActionDiff : AttackKind::kMinQ;
    cfg.eps = 0.15;
    Rng ra(trial);
    Vec adv = attacks::attack_observation(agent, s, cfg, ra);
    CHECK(linf(adv, s) <= 0.15 + 1e-12);
    for (double v : adv) CHECK(std::isfinite(v));
  }
}

TEST_CASE("transfer mode still respects the ball") {
  auto agent = make_agent(59, /*with_vq=*/true);
  Rng rng(21);
  Vec s = random_state(rng);
  AttackConfig cfg;
  cfg.kind = AttackKind::kActionDiff;
  cfg.eps = 0.1;
  cfg.transfer = true;
  Rng ra(8);
  Vec adv = attacks::attack_observation(agent, s, cfg, ra);
  CHECK(linf(adv, s) <= 0.1 + 1e-12);
}

TEST_CASE("regression attack matches the closed form for a linear predictor") {
  // One input, one output, no hidden layers: pred = w x + b.
  Rng rng(2);
  nets::Mlp net(1, 8, 0, 1, rng);
  double w = net.layers[0].W.values[0];
  double b = net.layers[0].b.values[0];
  agent::Transform identity;

  Vec s{0.4};
  Vec a_true{w * 0.4 + b};  // zero error at the clean input
  AttackConfig cfg;
  cfg.kind = AttackKind::kRegression;
  cfg.eps = 0.1;
  Rng ra(3);
  Vec adv = attacks::regression_attack(net, identity, s, a_true, cfg, ra);
  // ||w x + b - a_true||^2 grows with |x - 0.4|: either endpoint is optimal.
  CHECK(std::abs(std::abs(adv[0] - 0.4) - 0.1) < 1e-9);
}

TEST_CASE("dispatcher rejects the regression kind") {
  auto agent = make_agent(61);
  AttackConfig cfg;
  cfg.kind = AttackKind::kRegression;
  cfg.eps = 0.1;
  Rng rng(1);
  Vec s{0.0, 0.0, 0.0};
  CHECK_THROWS_AS(attacks::attack_observation(agent, s, cfg, rng),
                  std::invalid_argument);
}
