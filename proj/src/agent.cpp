#include "vqrl/agent.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"

namespace vqrl::agent {

using diff::ParamTensor;
using diff::Tape;
using nlohmann::json;

namespace {
constexpr double kLogSqrt2Pi = 0.9189385332046727;  // 0.5 * log(2*pi)
constexpr double kSquashEps = 1e-6;
}  // namespace

// ---------------------------------------------------------------------------
// Transform

void Transform::fit(const vq::Batch& warmup_states) {
  switch (kind) {
    case TransformKind::kNone:
      break;
    case TransformKind::kVq: {
      vq_cfg.validate();
      vq::InitReport report;
      codebooks = vq::init_codebooks(warmup_states, vq_cfg.K, vq_cfg.shared, &report);
      if (report.has_warnings()) {
        std::fprintf(stderr, "%s\n", report.to_string().c_str());
      }
      break;
    }
    case TransformKind::kBdr:
      bdr_range = vq::bdr_range_from_batch(warmup_states);
      break;
  }
  ready = true;
}

Vec Transform::apply(std::span<const double> s) const {
  if (is_identity()) return Vec(s.begin(), s.end());
  if (kind == TransformKind::kVq) return vq::quantize_values(s, codebooks);
  return vq::bdr_quantize(s, bdr_bits, bdr_range);
}

// ---------------------------------------------------------------------------
// Config

void AgentConfig::validate() const {
  if (gamma < 0.0 || gamma >= 1.0) throw std::invalid_argument("AgentConfig: gamma must be in [0, 1)");
  if (tau <= 0.0 || tau > 1.0) throw std::invalid_argument("AgentConfig: tau must be in (0, 1]");
  if (vq && bdr_bits) {
    throw std::invalid_argument("AgentConfig: vq and bdr transforms are mutually exclusive");
  }
  if (batch_size < 1 || total_steps < 1) throw std::invalid_argument("AgentConfig: bad sizes");
  if (vq) vq->validate();
  if (bdr_bits && *bdr_bits < 1) throw std::invalid_argument("AgentConfig: bdr bits must be >= 1");
}

std::string AgentConfig::transform_name() const {
  std::string base = vq ? "vq" : (bdr_bits ? "bdr" : "none");
  if (sa_reg_weight) return base == "none" ? "sa" : ("sa-" + base);
  return base;
}

// ---------------------------------------------------------------------------
// ReplayBuffer

void ReplayBuffer::push(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[cursor_] = std::move(t);
    cursor_ = (cursor_ + 1) % capacity_;
  }
}

ReplayBatch ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (n > data_.size()) throw std::invalid_argument("ReplayBuffer::sample: not enough data");
  std::unordered_set<std::size_t> seen;
  ReplayBatch b;
  b.s.reserve(n);
  while (b.s.size() < n) {
    std::size_t i = rng.below(data_.size());
    if (!seen.insert(i).second) continue;
    const Transition& t = data_[i];
    b.s.push_back(t.s);
    b.s_next.push_back(t.s_next);
    b.a.push_back(t.a);
    b.r.push_back(t.r);
    b.done.push_back(t.done ? 1.0 : 0.0);
  }
  return b;
}

// ---------------------------------------------------------------------------
// SacAgent

SacAgent::SacAgent(const envs::EnvMetadata& meta, const AgentConfig& cfg,
                   std::uint64_t seed)
    : meta_(meta), cfg_(cfg), rng_(seed) {
  cfg_.validate();
  if (cfg_.vq) {
    transform_.kind = TransformKind::kVq;
    transform_.vq_cfg = *cfg_.vq;
  } else if (cfg_.bdr_bits) {
    transform_.kind = TransformKind::kBdr;
    transform_.bdr_bits = *cfg_.bdr_bits;
  }
  double scale = meta.action_hi;  // symmetric bounds assumed
  policy_ = nets::GaussianPolicy(meta.obs_dim, cfg_.hidden, cfg_.n_hidden,
                                 meta.action_dim, scale, rng_);
  q1_ = nets::Critic(meta.obs_dim, meta.action_dim, cfg_.hidden, cfg_.n_hidden, rng_);
  q2_ = nets::Critic(meta.obs_dim, meta.action_dim, cfg_.hidden, cfg_.n_hidden, rng_);
  q1_target_ = q1_;
  q2_target_ = q2_;
  actor_opt_ = nets::Adam(cfg_.actor_lr);
  critic_opt_ = nets::Adam(cfg_.critic_lr);
}

std::vector<ParamTensor*> SacAgent::actor_params() { return policy_.params(); }

std::vector<ParamTensor*> SacAgent::critic_params() {
  auto out = q1_.params();
  for (ParamTensor* p : q2_.params()) out.push_back(p);
  return out;
}

Vec SacAgent::act(std::span<const double> obs_raw, bool deterministic) {
  for (double v : obs_raw) {
    if (!std::isfinite(v)) throw std::invalid_argument("SacAgent::act: non-finite observation");
  }
  Vec obs_t = transform_.apply(obs_raw);
  Tape t;
  int x = t.input({1, obs_t.size()}, {obs_t.data(), obs_t.size()});
  auto d = policy_.forward(t, x, /*as_leaf=*/false);
  auto mean = t.values(d.mean);
  auto ls = t.values(d.log_std);
  Vec a(mean.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    double u = mean[i];
    if (!deterministic) u += std::exp(ls[i]) * rng_.normal();
    a[i] = std::tanh(u) * policy_.action_scale;
  }
  return a;
}

namespace {

// Flattens transformed rows into a [B, D] buffer.
std::vector<double> transform_rows(const Transform& tf, const vq::Batch& rows) {
  std::vector<double> flat;
  if (rows.empty()) return flat;
  flat.reserve(rows.size() * rows.front().size());
  for (const Vec& r : rows) {
    Vec t = tf.apply(r);
    flat.insert(flat.end(), t.begin(), t.end());
  }
  return flat;
}

std::vector<double> flatten(const std::vector<Vec>& rows) {
  std::vector<double> flat;
  if (rows.empty()) return flat;
  flat.reserve(rows.size() * rows.front().size());
  for (const Vec& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return flat;
}

}  // namespace

CriticStats SacAgent::critic_update(const ReplayBatch& batch) {
  const std::size_t B = batch.s.size();
  const std::size_t D = meta_.obs_dim;
  const std::size_t A = meta_.action_dim;

  std::vector<double> s_t = transform_rows(transform_, batch.s);
  std::vector<double> s2_t = transform_rows(transform_, batch.s_next);
  {
    // Every critic/actor input must equal transform(raw).
    Vec check = transform_.apply(batch.s.front());
    for (std::size_t j = 0; j < D; ++j) {
      if (s_t[j] != check[j]) throw std::logic_error("critic_update: transform bypassed");
    }
  }

  // TD target (no gradients).
  std::vector<double> y(B);
  {
    Tape t;
    int x2 = t.input({B, D}, s2_t);
    auto d = policy_.forward(t, x2, /*as_leaf=*/false);
    auto mean = t.values(d.mean);
    auto ls = t.values(d.log_std);
    std::vector<double> a2(B * A);
    std::vector<double> logp(B, 0.0);
    for (std::size_t i = 0; i < B * A; ++i) {
      double std = std::exp(ls[i]);
      double xi = rng_.normal();
      double u = mean[i] + std * xi;
      double ta = std::tanh(u);
      logp[i / A] += -0.5 * xi * xi - kLogSqrt2Pi - ls[i] -
                     std::log(1.0 - ta * ta + kSquashEps);
      a2[i] = ta * policy_.action_scale;
    }
    int x2b = t.input({B, D}, s2_t);
    int a2_id = t.input({B, A}, a2);
    int qt1 = q1_target_.forward(t, x2b, a2_id, /*as_leaf=*/false);
    int qt2 = q2_target_.forward(t, x2b, a2_id, /*as_leaf=*/false);
    auto v1 = t.values(qt1);
    auto v2 = t.values(qt2);
    for (std::size_t i = 0; i < B; ++i) {
      double q_min = std::min(v1[i], v2[i]);
      y[i] = batch.r[i] + cfg_.gamma * (1.0 - batch.done[i]) *
                              (q_min - cfg_.entropy_coef * logp[i]);
    }
  }

  Tape t;
  int x = t.input({B, D}, s_t);
  int a = t.input({B, A}, flatten(batch.a));
  int y_id = t.input({B, 1}, y);
  int q1 = q1_.forward(t, x, a, /*as_leaf=*/true);
  int q2 = q2_.forward(t, x, a, /*as_leaf=*/true);
  int l1 = t.mean(t.square(t.sub(q1, y_id)));
  int l2 = t.mean(t.square(t.sub(q2, y_id)));
  int loss = t.add(l1, l2);

  CriticStats stats;
  stats.q1_loss = t.value_scalar(l1);
  stats.q2_loss = t.value_scalar(l2);
  auto qv = t.values(q1);
  for (double q : qv) stats.mean_abs_q += std::abs(q);
  stats.mean_abs_q /= static_cast<double>(B);

  nets::zero_grads(critic_params());
  t.backward(loss);
  critic_opt_.step(critic_params());
  return stats;
}

double SacAgent::actor_update(const ReplayBatch& batch) {
  const std::size_t B = batch.s.size();
  const std::size_t D = meta_.obs_dim;
  const std::size_t A = meta_.action_dim;

  std::vector<double> s_t = transform_rows(transform_, batch.s);

  Tape t;
  int x = t.input({B, D}, s_t);
  auto d = policy_.forward(t, x, /*as_leaf=*/true);

  std::vector<double> xi(B * A), cterm(B * A);
  for (std::size_t i = 0; i < xi.size(); ++i) {
    xi[i] = rng_.normal();
    cterm[i] = -0.5 * xi[i] * xi[i] - kLogSqrt2Pi;
  }
  int xi_id = t.input({B, A}, xi);
  int u = t.add(d.mean, t.mul(t.exp_(d.log_std), xi_id));
  int a = t.tanh_(u);
  int a_env = t.scale(a, policy_.action_scale);

  int ent = t.sub(t.input({B, A}, cterm), d.log_std);
  int one_minus = t.add_scalar(t.scale(t.square(a), -1.0), 1.0 + kSquashEps);
  ent = t.sub(ent, t.log_(one_minus));

  int q1 = q1_.forward(t, x, a_env, /*as_leaf=*/true);
  int q2 = q2_.forward(t, x, a_env, /*as_leaf=*/true);
  int qmin = t.min_(q1, q2);

  int loss = t.add(t.scale(t.sum(ent), cfg_.entropy_coef / static_cast<double>(B)),
                   t.scale(t.mean(qmin), -1.0));

  if (cfg_.sa_reg_weight && *cfg_.sa_reg_weight > 0.0 && cfg_.sa_epsilon > 0.0) {
    std::vector<double> s_hat = smoothness_adversary(batch);
    std::vector<double> shat_t = transform_rows(transform_, [&] {
      vq::Batch rows(B);
      for (std::size_t i = 0; i < B; ++i)
        rows[i].assign(s_hat.begin() + i * D, s_hat.begin() + (i + 1) * D);
      return rows;
    }());
    int xh = t.input({B, D}, shat_t);
    auto dh = policy_.forward(t, xh, /*as_leaf=*/true);
    int sa = t.mean(t.square(t.sub(d.mean, dh.mean)));
    loss = t.add(loss, t.scale(sa, *cfg_.sa_reg_weight));
  }

  double loss_v = t.value_scalar(loss);
  nets::zero_grads(actor_params());
  t.backward(loss);
  actor_opt_.step(actor_params());
  return loss_v;
}

std::vector<double> SacAgent::smoothness_adversary(const ReplayBatch& batch) {
  const std::size_t B = batch.s.size();
  const std::size_t D = meta_.obs_dim;
  const double eps = cfg_.sa_epsilon;
  const double step = eps / 2.0;
  const int steps = 3;

  std::vector<double> s_raw = flatten(batch.s);
  std::vector<double> clean_mean;
  {
    Tape t;
    int x = t.input({B, D}, transform_rows(transform_, batch.s));
    auto d = policy_.forward(t, x, /*as_leaf=*/false);
    auto m = t.values(d.mean);
    clean_mean.assign(m.begin(), m.end());
  }

  std::vector<double> x = s_raw;
  for (double& v : x) v += rng_.uniform(-eps, eps);
  for (int it = 0; it < steps; ++it) {
    vq::Batch rows(B);
    for (std::size_t i = 0; i < B; ++i)
      rows[i].assign(x.begin() + i * D, x.begin() + (i + 1) * D);
    Tape t;
    int xt = t.input({B, D}, transform_rows(transform_, rows));
    auto d = policy_.forward(t, xt, /*as_leaf=*/false);
    int obj = t.sum(t.square(t.sub(d.mean, t.input({B, meta_.action_dim}, clean_mean))));
    t.backward(obj);
    auto g = t.grad(xt);  // straight-through: gradient w.r.t. raw input
    for (std::size_t i = 0; i < x.size(); ++i) {
      double gi = g[i];
      x[i] += step * (gi > 0.0 ? 1.0 : (gi < 0.0 ? -1.0 : 0.0));
      x[i] = std::clamp(x[i], s_raw[i] - eps, s_raw[i] + eps);
    }
  }
  return x;
}

double SacAgent::smoothness_regularizer(const ReplayBatch& batch) {
  const std::size_t B = batch.s.size();
  const std::size_t D = meta_.obs_dim;
  std::vector<double> s_hat = smoothness_adversary(batch);
  vq::Batch rows(B);
  for (std::size_t i = 0; i < B; ++i)
    rows[i].assign(s_hat.begin() + i * D, s_hat.begin() + (i + 1) * D);

  Tape t;
  int x = t.input({B, D}, transform_rows(transform_, batch.s));
  int xh = t.input({B, D}, transform_rows(transform_, rows));
  auto d = policy_.forward(t, x, /*as_leaf=*/false);
  auto dh = policy_.forward(t, xh, /*as_leaf=*/false);
  return t.value_scalar(t.mean(t.square(t.sub(d.mean, dh.mean))));
}

void SacAgent::soft_update_targets() {
  const nets::Critic& c1 = q1_;
  const nets::Critic& c2 = q2_;
  nets::soft_update(c1.params(), q1_target_.params(), cfg_.tau);
  nets::soft_update(c2.params(), q2_target_.params(), cfg_.tau);
}

double SacAgent::codebook_update(const vq::Batch& raw_states, double mean_abs_q,
                                 double* vq_loss_out) {
  if (transform_.kind != TransformKind::kVq || !transform_.ready) {
    if (vq_loss_out) *vq_loss_out = 0.0;
    return 0.0;
  }
  const vq::VqConfig& c = transform_.vq_cfg;
  double lambda = c.adaptive_scale
                      ? vq::adaptive_scale(std::span<const double>(&mean_abs_q, 1),
                                           c.alpha, c.lambda_lo, c.lambda_hi)
                      : 1.0;
  if (vq_loss_out) *vq_loss_out = vq::vq_loss(raw_states, transform_.codebooks);
  vq::update_codebooks(raw_states, transform_.codebooks, c.codebook_lr, lambda);
  return lambda;
}

SacAgent::PolicyDist SacAgent::policy_dist(std::span<const double> obs_t) const {
  Tape t;
  int x = t.input({1, obs_t.size()}, obs_t);
  auto d = policy_.forward(t, x, /*as_leaf=*/false);
  PolicyDist out;
  auto m = t.values(d.mean);
  auto l = t.values(d.log_std);
  out.mean.assign(m.begin(), m.end());
  out.log_std.assign(l.begin(), l.end());
  return out;
}

double SacAgent::kl_from_ref(const PolicyDist& ref, std::span<const double> obs_t,
                             Vec* grad_obs) const {
  const std::size_t A = ref.mean.size();
  Tape t;
  int x = t.input({1, obs_t.size()}, obs_t);
  auto d = policy_.forward(t, x, /*as_leaf=*/false);

  Vec var1(A);
  for (std::size_t i = 0; i < A; ++i) var1[i] = std::exp(2.0 * ref.log_std[i]);
  int mu1 = t.input({1, A}, ref.mean);
  int ls1 = t.input({1, A}, ref.log_std);
  int v1 = t.input({1, A}, var1);

  // KL(N(mu1, s1) || N(mu2, s2)) per dim:
  //   ls2 - ls1 + (var1 + (mu1 - mu2)^2) / (2 var2) - 1/2
  int inv2v2 = t.scale(t.exp_(t.scale(d.log_std, -2.0)), 0.5);
  int num = t.add(v1, t.square(t.sub(mu1, d.mean)));
  int elems = t.add_scalar(t.add(t.sub(d.log_std, ls1), t.mul(num, inv2v2)), -0.5);
  int kl = t.sum(elems);

  double value = t.value_scalar(kl);
  if (grad_obs) {
    t.backward(kl);
    auto g = t.grad(x);
    grad_obs->assign(g.begin(), g.end());
  }
  return value;
}

double SacAgent::q_of_policy_action(std::span<const double> obs_state_t,
                                    std::span<const double> obs_policy_t,
                                    Vec* grad_policy, Vec* grad_state) const {
  Tape t;
  int xp = t.input({1, obs_policy_t.size()}, obs_policy_t);
  auto d = policy_.forward(t, xp, /*as_leaf=*/false);
  int a = t.scale(t.tanh_(d.mean), policy_.action_scale);
  int xs = t.input({1, obs_state_t.size()}, obs_state_t);
  int q = q1_.forward(t, xs, a, /*as_leaf=*/false);
  int out = t.sum(q);
  double value = t.value_scalar(out);
  if (grad_policy || grad_state) {
    t.backward(out);
    if (grad_policy) {
      auto g = t.grad(xp);
      grad_policy->assign(g.begin(), g.end());
    }
    if (grad_state) {
      auto g = t.grad(xs);
      grad_state->assign(g.begin(), g.end());
    }
  }
  return value;
}

double SacAgent::q_value(std::span<const double> obs_t,
                         std::span<const double> action) const {
  Tape t;
  int x = t.input({1, obs_t.size()}, obs_t);
  int a = t.input({1, action.size()}, action);
  return t.value_scalar(t.sum(q1_.forward(t, x, a, /*as_leaf=*/false)));
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json tensor_to_json(const ParamTensor& p) {
  return json{{"shape", p.shape}, {"values", p.values}};
}

void tensor_from_json(const json& j, ParamTensor& p) {
  diff::Shape shape = j.at("shape").get<diff::Shape>();
  std::vector<double> values = j.at("values").get<std::vector<double>>();
  p = ParamTensor(std::move(shape), std::move(values));
}

json net_to_json(const std::vector<const ParamTensor*>& params) {
  json arr = json::array();
  for (const ParamTensor* p : params) arr.push_back(tensor_to_json(*p));
  return arr;
}

void net_from_json(const json& arr, const std::vector<ParamTensor*>& params) {
  if (arr.size() != params.size()) throw std::runtime_error("checkpoint: net layout mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) tensor_from_json(arr[i], *params[i]);
}

json config_to_json(const AgentConfig& c) {
  json j{{"gamma", c.gamma},
         {"tau", c.tau},
         {"actor_lr", c.actor_lr},
         {"critic_lr", c.critic_lr},
         {"batch_size", c.batch_size},
         {"hidden", c.hidden},
         {"n_hidden", c.n_hidden},
         {"entropy_coef", c.entropy_coef},
         {"total_steps", c.total_steps},
         {"warmup_steps", c.warmup_steps},
         {"buffer_capacity", c.buffer_capacity},
         {"sa_epsilon", c.sa_epsilon}};
  if (c.vq) {
    j["vq"] = json{{"K", c.vq->K},
                   {"alpha", c.vq->alpha},
                   {"codebook_lr", c.vq->codebook_lr},
                   {"lambda_lo", c.vq->lambda_lo},
                   {"lambda_hi", c.vq->lambda_hi},
                   {"shared", c.vq->shared},
                   {"adaptive_scale", c.vq->adaptive_scale}};
  }
  if (c.bdr_bits) j["bdr_bits"] = *c.bdr_bits;
  if (c.sa_reg_weight) j["sa_reg_weight"] = *c.sa_reg_weight;
  return j;
}

AgentConfig config_from_json(const json& j) {
  AgentConfig c;
  c.gamma = j.at("gamma");
  c.tau = j.at("tau");
  c.actor_lr = j.at("actor_lr");
  c.critic_lr = j.at("critic_lr");
  c.batch_size = j.at("batch_size");
  c.hidden = j.at("hidden");
  c.n_hidden = j.at("n_hidden");
  c.entropy_coef = j.at("entropy_coef");
  c.total_steps = j.at("total_steps");
  c.warmup_steps = j.at("warmup_steps");
  c.buffer_capacity = j.at("buffer_capacity");
  c.sa_epsilon = j.at("sa_epsilon");
  if (j.contains("vq")) {
    vq::VqConfig v;
    const json& jv = j.at("vq");
    v.K = jv.at("K");
    v.alpha = jv.at("alpha");
    v.codebook_lr = jv.at("codebook_lr");
    v.lambda_lo = jv.at("lambda_lo");
    v.lambda_hi = jv.at("lambda_hi");
    v.shared = jv.at("shared");
    v.adaptive_scale = jv.at("adaptive_scale");
    c.vq = v;
  }
  if (j.contains("bdr_bits")) c.bdr_bits = j.at("bdr_bits").get<int>();
  if (j.contains("sa_reg_weight")) c.sa_reg_weight = j.at("sa_reg_weight").get<double>();
  return c;
}

json meta_to_json(const envs::EnvMetadata& m) {
  return json::parse(m.to_json());
}

envs::EnvMetadata meta_from_json(const json& j) {
  envs::EnvMetadata m;
  m.name = j.at("name");
  m.obs_dim = j.at("obs_dim");
  m.action_dim = j.at("action_dim");
  m.action_lo = j.at("action_lo");
  m.action_hi = j.at("action_hi");
  m.r_min = j.at("r_min");
  m.r_max = j.at("r_max");
  m.horizon = j.at("horizon");
  return m;
}

}  // namespace

std::string SacAgent::save_json() const {
  json j;
  j["format"] = "vqrl-checkpoint-1";
  j["env"] = meta_to_json(meta_);
  j["config"] = config_to_json(cfg_);
  j["policy"] = net_to_json(policy_.params());
  j["q1"] = net_to_json(q1_.params());
  j["q2"] = net_to_json(q2_.params());
  j["q1_target"] = net_to_json(q1_target_.params());
  j["q2_target"] = net_to_json(q2_target_.params());
  j["rng"] = rng_.save_state();
  j["transform"] = {{"kind", transform_.kind == TransformKind::kVq
                                 ? "vq"
                                 : (transform_.kind == TransformKind::kBdr ? "bdr" : "none")},
                    {"ready", transform_.ready}};
  if (transform_.kind == TransformKind::kVq && transform_.ready) {
    std::ostringstream os;
    vq::save_codebooks(transform_.codebooks, os);
    j["transform"]["codebooks"] = os.str();
  }
  if (transform_.kind == TransformKind::kBdr) {
    j["transform"]["bits"] = transform_.bdr_bits;
    if (transform_.ready) {
      j["transform"]["lo"] = transform_.bdr_range.lo;
      j["transform"]["hi"] = transform_.bdr_range.hi;
    }
  }
  return j.dump();
}

SacAgent SacAgent::load_json(const std::string& text) {
  json j = json::parse(text);
  if (j.at("format") != "vqrl-checkpoint-1") {
    throw std::runtime_error("checkpoint: unsupported format");
  }
  envs::EnvMetadata meta = meta_from_json(j.at("env"));
  AgentConfig cfg = config_from_json(j.at("config"));
  SacAgent agent(meta, cfg, /*seed=*/0);
  net_from_json(j.at("policy"), agent.policy_.params());
  net_from_json(j.at("q1"), agent.q1_.params());
  net_from_json(j.at("q2"), agent.q2_.params());
  net_from_json(j.at("q1_target"), agent.q1_target_.params());
  net_from_json(j.at("q2_target"), agent.q2_target_.params());
  agent.rng_.load_state(j.at("rng"));
  const json& jt = j.at("transform");
  agent.transform_.ready = jt.at("ready");
  if (agent.transform_.kind == TransformKind::kVq && agent.transform_.ready) {
    std::istringstream is(jt.at("codebooks").get<std::string>());
    agent.transform_.codebooks = vq::load_codebooks(is);
  }
  if (agent.transform_.kind == TransformKind::kBdr && agent.transform_.ready) {
    agent.transform_.bdr_range.lo = jt.at("lo").get<Vec>();
    agent.transform_.bdr_range.hi = jt.at("hi").get<Vec>();
  }
  return agent;
}

std::uint64_t SacAgent::content_hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const std::vector<double>& vals) {
    for (double v : vals) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof(bits));
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xff;
        h *= 1099511628211ull;
      }
    }
  };
  for (const ParamTensor* p : policy_.params()) mix(p->values);
  for (const ParamTensor* p : q1_.params()) mix(p->values);
  for (const ParamTensor* p : q2_.params()) mix(p->values);
  if (transform_.kind == TransformKind::kVq && transform_.ready) {
    for (const auto& row : transform_.codebooks.items) mix(row);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Training loop

TrainResult train(SacAgent& agent, envs::Env& env, std::uint64_t seed) {
  const AgentConfig& cfg = agent.config();
  const envs::EnvMetadata& meta = env.metadata();

  ReplayBuffer buffer(cfg.buffer_capacity);
  Rng sample_rng(seed ^ 0x5DEECE66Dull);
  Rng action_rng(seed ^ 0xBADC0FFEEull);

  TrainResult result;
  result.seed = seed;
  result.log.reserve(cfg.total_steps);

  std::size_t episode = 0;
  Vec obs = env.reset(seed * 1000003 + episode);
  double ep_return = 0.0;
  double last_ep_return = 0.0;

  double update_seconds = 0.0;
  std::size_t update_count = 0;

  for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
    Vec a(meta.action_dim);
    if (step <= cfg.warmup_steps) {
      for (double& v : a) v = action_rng.uniform(meta.action_lo, meta.action_hi);
    } else {
      a = agent.act(obs, /*deterministic=*/false);
    }
    Transition tr = env.step(a);
    ep_return += tr.r;
    // Both envs end episodes only by hitting the horizon. That is a
    // truncation, not a true terminal, so the stored transition bootstraps
    // through it; treating the cutoff as terminal teaches the critic a
    // spurious Q = r at whatever state the clock ran out in.
    Transition stored = tr;
    stored.done = false;
    buffer.push(stored);
    if (tr.done) {
      last_ep_return = ep_return;
      result.episode_returns.push_back(ep_return);
      ep_return = 0.0;
      ++episode;
      obs = env.reset(seed * 1000003 + episode);
    } else {
      obs = tr.s_next;
    }

    TrainLogRow row;
    row.step = step;

    if (step == cfg.warmup_steps) {
      vq::Batch warmup_states(buffer.size());
      for (std::size_t i = 0; i < buffer.size(); ++i) warmup_states[i] = buffer.at(i).s;
      agent.mutable_transform().fit(warmup_states);
    }

    if (step > cfg.warmup_steps && buffer.size() >= cfg.batch_size) {
      auto t0 = std::chrono::steady_clock::now();
      ReplayBatch batch = buffer.sample(cfg.batch_size, sample_rng);
      CriticStats cs = agent.critic_update(batch);
      double actor_loss = agent.actor_update(batch);
      agent.soft_update_targets();
      double vql = 0.0;
      double lambda = agent.codebook_update(batch.s, cs.mean_abs_q, &vql);
      auto t1 = std::chrono::steady_clock::now();
      update_seconds += std::chrono::duration<double>(t1 - t0).count();
      ++update_count;

      if (!std::isfinite(cs.q1_loss) || !std::isfinite(cs.q2_loss) ||
          !std::isfinite(actor_loss)) {
        throw TrainDivergence(
            "training diverged at step " + std::to_string(step) +
            ": q1_loss=" + std::to_string(cs.q1_loss) +
            " q2_loss=" + std::to_string(cs.q2_loss) +
            " actor_loss=" + std::to_string(actor_loss) +
            " last_episode_return=" + std::to_string(last_ep_return));
      }
      row.lambda = lambda;
      row.vq_loss = vql;
      row.mean_abs_q = cs.mean_abs_q;
    }
    row.episode_return = last_ep_return;
    result.log.push_back(row);
  }
  result.seconds_per_iteration = update_count ? update_seconds / update_count : 0.0;
  return result;
}

void write_train_log_csv(const std::vector<TrainLogRow>& log, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_train_log_csv: cannot open " + path);
  os << "step,episode_return,lambda,vq_loss,mean_abs_q\n";
  char buf[160];
  for (const TrainLogRow& r : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n", r.step,
                  r.episode_return, r.lambda, r.vq_loss, r.mean_abs_q);
    os << buf;
  }
}

}  // namespace vqrl::agent
