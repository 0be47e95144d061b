#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vqrl/envs.hpp"
#include "vqrl/nets.hpp"
#include "vqrl/rng.hpp"
#include "vqrl/vq.hpp"

namespace vqrl::agent {

using envs::Transition;
using envs::Vec;

enum class TransformKind { kNone, kVq, kBdr };

/// The configured input transform. Identity until fit() is called with
/// warmup data (vq: quantile codebooks, bdr: per-dimension ranges).
struct Transform {
  TransformKind kind = TransformKind::kNone;
  vq::VqConfig vq_cfg;
  int bdr_bits = 0;
  bool ready = false;
  vq::PerDimCodebooks codebooks;
  vq::BdrRange bdr_range;

  void fit(const vq::Batch& warmup_states);
  Vec apply(std::span<const double> s) const;
  bool is_identity() const { return kind == TransformKind::kNone || !ready; }
};

struct AgentConfig {
  double gamma = 0.99;
  double tau = 0.005;
  double actor_lr = 3e-3;
  double critic_lr = 3e-3;
  std::size_t batch_size = 256;
  std::size_t hidden = 64;
  std::size_t n_hidden = 2;
  double entropy_coef = 0.05;
  std::size_t total_steps = 30000;
  std::size_t warmup_steps = 5000;
  std::size_t buffer_capacity = 100000;
  std::optional<vq::VqConfig> vq;
  std::optional<int> bdr_bits;
  std::optional<double> sa_reg_weight;
  double sa_epsilon = 0.1;

  void validate() const;  // at most one of {vq, bdr}
  std::string transform_name() const;
};

struct ReplayBatch {
  vq::Batch s, s_next;       // raw observations
  std::vector<Vec> a;
  std::vector<double> r;
  std::vector<double> done;
};

/// Ring buffer of raw (untransformed) transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}
  void push(Transition t);
  std::size_t size() const { return data_.size(); }
  /// Uniform sample of `n` distinct transitions.
  ReplayBatch sample(std::size_t n, Rng& rng) const;
  const Transition& at(std::size_t i) const { return data_[i]; }

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::vector<Transition> data_;
};

struct CriticStats {
  double q1_loss = 0.0;
  double q2_loss = 0.0;
  double mean_abs_q = 0.0;  // |Q| averaged over the mini-batch (Adaptive scale input)
};

class SacAgent {
 public:
  SacAgent(const envs::EnvMetadata& meta, const AgentConfig& cfg,
           std::uint64_t seed);

  const AgentConfig& config() const { return cfg_; }
  const envs::EnvMetadata& env_meta() const { return meta_; }
  const Transform& transform() const { return transform_; }
  Transform& mutable_transform() { return transform_; }

  Vec transform_obs(std::span<const double> s) const { return transform_.apply(s); }

  /// Stochastic (or mean) action on the transformed observation.
  Vec act(std::span<const double> obs_raw, bool deterministic);

  CriticStats critic_update(const ReplayBatch& batch);
  double actor_update(const ReplayBatch& batch);
  void soft_update_targets();

  /// One scaled codebook step on the raw states of the batch.
  /// Returns the lambda that was applied; optionally reports the
  /// pre-update vq loss.
  double codebook_update(const vq::Batch& raw_states, double mean_abs_q,
                         double* vq_loss_out = nullptr);

  /// Worst-case states within B(s, sa_epsilon) found by 3-step PGD
  /// maximizing the policy-mean shift; returns a flat [B, D] buffer.
  std::vector<double> smoothness_adversary(const ReplayBatch& batch);

  /// Mean squared policy-mean shift under the smoothness adversary.
  double smoothness_regularizer(const ReplayBatch& batch);

  // Differentiable probes used by the attack module. All of them feed the
  // already-transformed observation and return gradients w.r.t. that input,
  // which the caller passes through the quantizer straight-through.
  struct PolicyDist {
    Vec mean, log_std;  // pre-squash
  };
  PolicyDist policy_dist(std::span<const double> obs_t) const;

  /// KL(ref || pi(.|obs_t)) for diagonal Gaussians; gradient w.r.t. obs_t.
  double kl_from_ref(const PolicyDist& ref, std::span<const double> obs_t,
                     Vec* grad_obs) const;

  /// Q1 of (obs_state_t, mean-action(obs_policy_t)); gradient w.r.t. obs_policy_t
  /// (and obs_state_t if grad_state is non-null).
  double q_of_policy_action(std::span<const double> obs_state_t,
                            std::span<const double> obs_policy_t,
                            Vec* grad_policy, Vec* grad_state = nullptr) const;

  double q_value(std::span<const double> obs_t, std::span<const double> action) const;

  nets::GaussianPolicy& policy() { return policy_; }
  const nets::GaussianPolicy& policy() const { return policy_; }

  std::string save_json() const;
  static SacAgent load_json(const std::string& text);

  /// FNV-1a hash over all parameter and codebook values; used to verify
  /// that evaluation does not mutate the agent.
  std::uint64_t content_hash() const;

  Rng& rng() { return rng_; }

 private:
  SacAgent() = default;
  std::vector<nets::ParamTensor*> actor_params();
  std::vector<nets::ParamTensor*> critic_params();

  envs::EnvMetadata meta_;
  AgentConfig cfg_;
  Transform transform_;
  nets::GaussianPolicy policy_;
  nets::Critic q1_, q2_, q1_target_, q2_target_;
  nets::Adam actor_opt_{3e-4}, critic_opt_{3e-4};
  Rng rng_;
  friend struct AgentIo;
};

struct TrainLogRow {
  std::size_t step = 0;
  double episode_return = 0.0;  // last completed episode
  double lambda = 0.0;
  double vq_loss = 0.0;
  double mean_abs_q = 0.0;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  std::vector<double> episode_returns;
  double seconds_per_iteration = 0.0;
  std::uint64_t seed = 0;
};

/// Thrown when a loss goes non-finite; carries a diagnostic snapshot.
struct TrainDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Warmup with random actions, fit the transform, then strictly interleave
/// one agent update and one codebook update per environment step.
TrainResult train(SacAgent& agent, envs::Env& env, std::uint64_t seed);

void write_train_log_csv(const std::vector<TrainLogRow>& log, const std::string& path);

}  // namespace vqrl::agent
