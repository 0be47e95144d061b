#include "vqrl/nets.hpp"

#include <cmath>
#include <stdexcept>

namespace vqrl::nets {

namespace {

ParamTensor init_weight(std::size_t in, std::size_t out, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> w(in * out);
  for (double& v : w) v = rng.uniform(-bound, bound);
  return ParamTensor({in, out}, std::move(w));
}

}  // namespace

Linear::Linear(std::size_t in, std::size_t out, Rng& rng)
    : W(init_weight(in, out, rng)), b(ParamTensor::zeros({out})) {}

int Linear::forward(Tape& t, int x, bool as_leaf) const {
  auto* self = const_cast<Linear*>(this);
  int w = as_leaf ? t.leaf(self->W)
                  : t.input(W.shape, {W.values.data(), W.values.size()});
  int bb = as_leaf ? t.leaf(self->b)
                   : t.input(b.shape, {b.values.data(), b.values.size()});
  return t.add(t.matmul(x, w), bb);
}

Mlp::Mlp(std::size_t in, std::size_t hidden, std::size_t n_hidden,
         std::size_t out, Rng& rng) {
  std::size_t prev = in;
  for (std::size_t i = 0; i < n_hidden; ++i) {
    layers.emplace_back(prev, hidden, rng);
    prev = hidden;
  }
  layers.emplace_back(prev, out, rng);
}

int Mlp::forward(Tape& t, int x, bool as_leaf) const {
  int h = x;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    h = t.relu(layers[i].forward(t, h, as_leaf));
  }
  return layers.back().forward(t, h, as_leaf);
}

std::vector<ParamTensor*> Mlp::params() {
  std::vector<ParamTensor*> out;
  for (Linear& l : layers) {
    out.push_back(&l.W);
    out.push_back(&l.b);
  }
  return out;
}

std::vector<const ParamTensor*> Mlp::params() const {
  std::vector<const ParamTensor*> out;
  for (const Linear& l : layers) {
    out.push_back(&l.W);
    out.push_back(&l.b);
  }
  return out;
}

GaussianPolicy::GaussianPolicy(std::size_t obs_dim, std::size_t hidden,
                               std::size_t n_hidden, std::size_t action_dim,
                               double scale, Rng& rng)
    : action_scale(scale) {
  // Trunk ends in a hidden representation; heads are separate linears.
  std::size_t prev = obs_dim;
  for (std::size_t i = 0; i < n_hidden; ++i) {
    trunk.layers.emplace_back(prev, hidden, rng);
    prev = hidden;
  }
  mean_head = Linear(prev, action_dim, rng);
  log_std_head = Linear(prev, action_dim, rng);
}

GaussianPolicy::Dist GaussianPolicy::forward(Tape& t, int obs, bool as_leaf) const {
  int h = obs;
  for (const Linear& l : trunk.layers) h = t.relu(l.forward(t, h, as_leaf));
  Dist d;
  d.mean = mean_head.forward(t, h, as_leaf);
  d.log_std = t.clip(log_std_head.forward(t, h, as_leaf), kLogStdMin, kLogStdMax);
  return d;
}

std::vector<double> GaussianPolicy::mean_action(const std::vector<double>& obs) const {
  Tape t;
  int x = t.input({1, obs.size()}, {obs.data(), obs.size()});
  Dist d = forward(t, x, /*as_leaf=*/false);
  auto m = t.values(d.mean);
  std::vector<double> a(m.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::tanh(m[i]) * action_scale;
  return a;
}

std::vector<ParamTensor*> GaussianPolicy::params() {
  auto out = trunk.params();
  out.push_back(&mean_head.W);
  out.push_back(&mean_head.b);
  out.push_back(&log_std_head.W);
  out.push_back(&log_std_head.b);
  return out;
}

std::vector<const ParamTensor*> GaussianPolicy::params() const {
  auto* self = const_cast<GaussianPolicy*>(this);
  std::vector<const ParamTensor*> out;
  for (ParamTensor* p : self->params()) out.push_back(p);
  return out;
}

Critic::Critic(std::size_t obs_dim, std::size_t action_dim, std::size_t hidden,
               std::size_t n_hidden, Rng& rng)
    : Ws(init_weight(obs_dim, hidden, rng)),
      Wa(init_weight(action_dim, hidden, rng)),
      b1(ParamTensor::zeros({hidden})) {
  if (n_hidden < 1) throw std::invalid_argument("Critic: n_hidden must be >= 1");
  std::size_t prev = hidden;
  for (std::size_t i = 0; i + 1 < n_hidden; ++i) {
    rest.layers.emplace_back(prev, hidden, rng);
    prev = hidden;
  }
  rest.layers.emplace_back(prev, 1, rng);
}

int Critic::forward(Tape& t, int obs, int action, bool as_leaf) const {
  auto* self = const_cast<Critic*>(this);
  auto reg = [&](ParamTensor& p) {
    return as_leaf ? t.leaf(p)
                   : t.input(p.shape, {p.values.data(), p.values.size()});
  };
  int h = t.relu(t.add(t.add(t.matmul(obs, reg(self->Ws)),
                             t.matmul(action, reg(self->Wa))),
                       reg(self->b1)));
  for (std::size_t i = 0; i + 1 < rest.layers.size(); ++i) {
    h = t.relu(rest.layers[i].forward(t, h, as_leaf));
  }
  return rest.layers.back().forward(t, h, as_leaf);
}

std::vector<ParamTensor*> Critic::params() {
  std::vector<ParamTensor*> out{&Ws, &Wa, &b1};
  for (ParamTensor* p : rest.params()) out.push_back(p);
  return out;
}

std::vector<const ParamTensor*> Critic::params() const {
  auto* self = const_cast<Critic*>(this);
  std::vector<const ParamTensor*> out;
  for (ParamTensor* p : self->params()) out.push_back(p);
  return out;
}

void Adam::step(const std::vector<ParamTensor*>& params) {
  if (slots_.size() != params.size()) {
    slots_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      slots_[i].m.assign(params[i]->size(), 0.0);
      slots_[i].v.assign(params[i]->size(), 0.0);
    }
  }
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamTensor& p = *params[i];
    Slot& s = slots_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      double g = p.grad[j];
      s.m[j] = beta1_ * s.m[j] + (1.0 - beta1_) * g;
      s.v[j] = beta2_ * s.v[j] + (1.0 - beta2_) * g * g;
      p.values[j] -= lr_ * (s.m[j] / bc1) / (std::sqrt(s.v[j] / bc2) + eps_);
    }
  }
}

void zero_grads(const std::vector<ParamTensor*>& params) {
  for (ParamTensor* p : params) p->zero_grad();
}

void soft_update(const std::vector<const ParamTensor*>& online,
                 const std::vector<ParamTensor*>& target, double tau) {
  if (online.size() != target.size()) {
    throw std::invalid_argument("soft_update: parameter list size mismatch");
  }
  for (std::size_t i = 0; i < online.size(); ++i) {
    const auto& src = online[i]->values;
    auto& dst = target[i]->values;
    for (std::size_t j = 0; j < dst.size(); ++j) {
      dst[j] = tau * src[j] + (1.0 - tau) * dst[j];
    }
  }
}

}  // namespace vqrl::nets
