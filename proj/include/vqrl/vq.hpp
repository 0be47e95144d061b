#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace vqrl::vq {

using Vec = std::vector<double>;
using Batch = std::vector<Vec>;  // N rows of D scalars

/// One scalar codebook per input dimension. Items within a dimension are
/// kept sorted ascending at all times. In shared mode a single codebook
/// is trained on all dimensions pooled; the table still exposes D rows.
struct PerDimCodebooks {
  std::size_t D = 0;
  std::size_t K = 0;
  bool shared = false;
  std::vector<Vec> items;  // D rows of K scalars (shared: identical rows)

  const Vec& row(std::size_t d) const { return items[shared ? 0 : d]; }
};

struct VqConfig {
  std::size_t K = 16;
  double alpha = 60.0;        // divisor in the adaptive scale
  double codebook_lr = 1.0;
  double lambda_lo = 0.0;
  double lambda_hi = 10.0;
  bool shared = false;
  bool adaptive_scale = true;  // false: lambda fixed at 1 (ablation)

  void validate() const;
};

struct QuantizedObservation {
  Vec values;                        // values[d] == row(d)[assignments[d]]
  std::vector<std::size_t> assignments;
};

struct InitReport {
  std::vector<std::size_t> constant_dims;  // zero-range dims, items collapsed
  bool has_warnings() const { return !constant_dims.empty(); }
  std::string to_string() const;
};

/// Items are the midpoints of K equal-mass bins of the warmup values
/// (per dimension; pooled across dimensions in shared mode).
PerDimCodebooks init_codebooks(const Batch& warmup, std::size_t K,
                               bool shared = false, InitReport* report = nullptr);

/// Nearest item per dimension, ties broken toward the lower index.
QuantizedObservation quantize(std::span<const double> s, const PerDimCodebooks& cb);
Vec quantize_values(std::span<const double> s, const PerDimCodebooks& cb);

/// Straight-through estimator: the quantizer backward pass is identity.
Vec straight_through(const QuantizedObservation& q, std::span<const double> upstream);

/// (1/D)(1/K) sum_d sum_k (1/N_dk) sum_i (s_i - c_k)^2; empty items
/// contribute nothing.
double vq_loss(const Batch& batch, const PerDimCodebooks& cb);

/// lambda = mean(|q|) / alpha, clipped into [lo, hi].
double adaptive_scale(std::span<const double> q_values, double alpha,
                      double clip_lo, double clip_hi);

/// One gradient-descent step on lambda * vq_loss w.r.t. the items.
/// Items with no assigned batch elements are left in place.
void update_codebooks(const Batch& batch, PerDimCodebooks& cb, double lr,
                      double lambda);

struct AttackSpace {
  std::vector<std::size_t> per_dim;  // reachable items per dimension
  double log_total = 0.0;            // log of the product of the counts
  std::size_t max_per_dim() const;
  double mean_per_dim() const;
};

/// Number of items per dimension whose cell intersects [s_d - eps, s_d + eps],
/// with cells closed on the upper midpoint to match the tie-break rule.
AttackSpace attack_space_size(std::span<const double> s, double eps,
                              const PerDimCodebooks& cb);

/// Bit-depth reduction: clip to [lo, hi] and round to the nearest of
/// 2^bits uniformly spaced levels per dimension.
struct BdrRange {
  Vec lo, hi;
};
Vec bdr_quantize(std::span<const double> s, int bits, const BdrRange& range);
BdrRange bdr_range_from_batch(const Batch& batch);

// Serialization: versioned textual table, hex floats for bit-exact
// round trips. Header: "vqcb <version> <D> <K> <separate|shared>".
void save_codebooks(const PerDimCodebooks& cb, std::ostream& os);
PerDimCodebooks load_codebooks(std::istream& is);
void save_codebooks_file(const PerDimCodebooks& cb, const std::string& path);
PerDimCodebooks load_codebooks_file(const std::string& path);

}  // namespace vqrl::vq
