#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vqrl/diffcore.hpp"
#include "vqrl/rng.hpp"

namespace vqrl::nets {

using diff::ParamTensor;
using diff::Tape;

struct Linear {
  ParamTensor W;  // [in, out]
  ParamTensor b;  // [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng);

  /// as_leaf: register as trainable leaves; otherwise as constants.
  int forward(Tape& t, int x, bool as_leaf) const;
};

/// Relu MLP: n_hidden relu layers followed by a linear output layer.
struct Mlp {
  std::vector<Linear> layers;

  Mlp() = default;
  Mlp(std::size_t in, std::size_t hidden, std::size_t n_hidden, std::size_t out,
      Rng& rng);

  int forward(Tape& t, int x, bool as_leaf) const;
  std::vector<ParamTensor*> params();
  std::vector<const ParamTensor*> params() const;
};

/// Tanh-squashed Gaussian policy head with state-dependent log-std,
/// clipped into [kLogStdMin, kLogStdMax].
struct GaussianPolicy {
  Mlp trunk;        // obs -> hidden
  Linear mean_head;
  Linear log_std_head;
  double action_scale = 1.0;

  static constexpr double kLogStdMin = -5.0;
  static constexpr double kLogStdMax = 2.0;

  GaussianPolicy() = default;
  GaussianPolicy(std::size_t obs_dim, std::size_t hidden, std::size_t n_hidden,
                 std::size_t action_dim, double action_scale, Rng& rng);

  struct Dist {
    int mean;     // pre-squash mean, [B, A]
    int log_std;  // clipped, [B, A]
  };
  Dist forward(Tape& t, int obs, bool as_leaf) const;

  /// tanh(mean) * action_scale for a single observation (no tape).
  std::vector<double> mean_action(const std::vector<double>& obs) const;

  std::vector<ParamTensor*> params();
  std::vector<const ParamTensor*> params() const;
};

/// Q(s, a): the first layer consumes state and action through separate
/// weight matrices (equivalent to a concatenated input layer).
struct Critic {
  ParamTensor Ws;  // [obs, hidden]
  ParamTensor Wa;  // [act, hidden]
  ParamTensor b1;  // [hidden]
  Mlp rest;        // hidden -> 1

  Critic() = default;
  Critic(std::size_t obs_dim, std::size_t action_dim, std::size_t hidden,
         std::size_t n_hidden, Rng& rng);

  int forward(Tape& t, int obs, int action, bool as_leaf) const;

  std::vector<ParamTensor*> params();
  std::vector<const ParamTensor*> params() const;
};

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// One step on the accumulated gradients; does not zero them.
  void step(const std::vector<ParamTensor*>& params);

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Slot> slots_;
};

void zero_grads(const std::vector<ParamTensor*>& params);

/// target <- tau * online + (1 - tau) * target, elementwise.
void soft_update(const std::vector<const ParamTensor*>& online,
                 const std::vector<ParamTensor*>& target, double tau);

}  // namespace vqrl::nets
