#include "vqrl/vq.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace vqrl::vq {

void VqConfig::validate() const {
  if (K < 1) throw std::invalid_argument("VqConfig: K must be >= 1");
  if (alpha <= 0.0) throw std::invalid_argument("VqConfig: alpha must be > 0");
  if (codebook_lr <= 0.0) throw std::invalid_argument("VqConfig: codebook_lr must be > 0");
  if (lambda_lo > lambda_hi) throw std::invalid_argument("VqConfig: lambda clip lo > hi");
}

std::string InitReport::to_string() const {
  if (constant_dims.empty()) return "";
  std::string s = "warning: constant warmup dimensions (all items collapsed):";
  for (std::size_t d : constant_dims) s += " " + std::to_string(d);
  return s;
}

namespace {

double quantile_sorted(const Vec& sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty data");
  double pos = p * static_cast<double>(sorted.size() - 1);
  std::size_t i = static_cast<std::size_t>(pos);
  if (i + 1 >= sorted.size()) return sorted.back();
  double frac = pos - static_cast<double>(i);
  return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

Vec quantile_items(Vec values, std::size_t K) {
  std::sort(values.begin(), values.end());
  Vec items(K);
  for (std::size_t k = 0; k < K; ++k) {
    items[k] = quantile_sorted(values, (static_cast<double>(k) + 0.5) /
                                           static_cast<double>(K));
  }
  std::sort(items.begin(), items.end());
  return items;
}

std::size_t nearest_index(double v, const Vec& row) {
  // Linear scan with strict improvement keeps ties at the lower index.
  std::size_t best = 0;
  double best_d = std::abs(v - row[0]);
  for (std::size_t k = 1; k < row.size(); ++k) {
    double d = std::abs(v - row[k]);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

}  // namespace

PerDimCodebooks init_codebooks(const Batch& warmup, std::size_t K, bool shared,
                               InitReport* report) {
  if (warmup.empty()) throw std::invalid_argument("init_codebooks: empty warmup batch");
  if (K < 1) throw std::invalid_argument("init_codebooks: K must be >= 1");
  const std::size_t D = warmup.front().size();
  for (const Vec& row : warmup) {
    if (row.size() != D) throw std::invalid_argument("init_codebooks: ragged warmup batch");
  }

  PerDimCodebooks cb;
  cb.D = D;
  cb.K = K;
  cb.shared = shared;

  InitReport local;
  if (shared) {
    Vec pooled;
    pooled.reserve(warmup.size() * D);
    for (const Vec& row : warmup) pooled.insert(pooled.end(), row.begin(), row.end());
    cb.items.push_back(quantile_items(std::move(pooled), K));
    if (cb.items[0].front() == cb.items[0].back() && K > 1) local.constant_dims.push_back(0);
  } else {
    cb.items.resize(D);
    for (std::size_t d = 0; d < D; ++d) {
      Vec col(warmup.size());
      for (std::size_t i = 0; i < warmup.size(); ++i) col[i] = warmup[i][d];
      cb.items[d] = quantile_items(std::move(col), K);
      if (cb.items[d].front() == cb.items[d].back() && K > 1) local.constant_dims.push_back(d);
    }
  }
  if (report) *report = std::move(local);
  return cb;
}

QuantizedObservation quantize(std::span<const double> s, const PerDimCodebooks& cb) {
  if (s.size() != cb.D) {
    throw std::invalid_argument("quantize: input has " + std::to_string(s.size()) +
                                " dims, codebooks expect " + std::to_string(cb.D));
  }
  QuantizedObservation out;
  out.values.resize(cb.D);
  out.assignments.resize(cb.D);
  for (std::size_t d = 0; d < cb.D; ++d) {
    if (!std::isfinite(s[d])) {
      throw std::invalid_argument("quantize: non-finite input at dimension " +
                                  std::to_string(d));
    }
    const Vec& row = cb.row(d);
    std::size_t k = nearest_index(s[d], row);
    out.assignments[d] = k;
    out.values[d] = row[k];
  }
  return out;
}

Vec quantize_values(std::span<const double> s, const PerDimCodebooks& cb) {
  return quantize(s, cb).values;
}

Vec straight_through(const QuantizedObservation& q, std::span<const double> upstream) {
  if (upstream.size() != q.values.size()) {
    throw std::invalid_argument("straight_through: gradient size mismatch");
  }
  return Vec(upstream.begin(), upstream.end());
}

double vq_loss(const Batch& batch, const PerDimCodebooks& cb) {
  if (batch.empty()) throw std::invalid_argument("vq_loss: empty batch");
  const std::size_t D = cb.D, K = cb.K;
  double total = 0.0;
  std::vector<double> sq(K), cnt(K);
  for (std::size_t d = 0; d < D; ++d) {
    const Vec& row = cb.row(d);
    std::fill(sq.begin(), sq.end(), 0.0);
    std::fill(cnt.begin(), cnt.end(), 0.0);
    for (const Vec& s : batch) {
      std::size_t k = nearest_index(s[d], row);
      double diff = s[d] - row[k];
      sq[k] += diff * diff;
      cnt[k] += 1.0;
    }
    for (std::size_t k = 0; k < K; ++k) {
      if (cnt[k] > 0.0) total += sq[k] / cnt[k];
    }
  }
  return total / (static_cast<double>(D) * static_cast<double>(K));
}

double adaptive_scale(std::span<const double> q_values, double alpha,
                      double clip_lo, double clip_hi) {
  if (q_values.empty()) throw std::invalid_argument("adaptive_scale: empty batch");
  if (alpha <= 0.0) throw std::invalid_argument("adaptive_scale: alpha must be > 0");
  double m = 0.0;
  for (double q : q_values) m += std::abs(q);
  m /= static_cast<double>(q_values.size());
  return std::clamp(m / alpha, clip_lo, clip_hi);
}

void update_codebooks(const Batch& batch, PerDimCodebooks& cb, double lr,
                      double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("update_codebooks: lambda must be >= 0");
  if (lambda == 0.0 || batch.empty()) return;
  const std::size_t D = cb.D, K = cb.K;
  const double coef = lr * lambda * 2.0 /
                      (static_cast<double>(D) * static_cast<double>(K));

  std::vector<double> grad(K);
  auto accumulate_dim = [&](std::size_t d, const Vec& row, std::vector<double>& g) {
    std::vector<double> sum(K, 0.0), cnt(K, 0.0);
    for (const Vec& s : batch) {
      std::size_t k = nearest_index(s[d], row);
      sum[k] += s[d];
      cnt[k] += 1.0;
    }
    for (std::size_t k = 0; k < K; ++k) {
      if (cnt[k] > 0.0) g[k] += row[k] - sum[k] / cnt[k];
    }
  };

  if (cb.shared) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t d = 0; d < D; ++d) accumulate_dim(d, cb.items[0], grad);
    Vec next = cb.items[0];
    for (std::size_t k = 0; k < K; ++k) next[k] -= coef * grad[k];
    std::sort(next.begin(), next.end());
    cb.items[0] = std::move(next);  // readers see either old or new table
  } else {
    for (std::size_t d = 0; d < D; ++d) {
      std::fill(grad.begin(), grad.end(), 0.0);
      accumulate_dim(d, cb.items[d], grad);
      Vec next = cb.items[d];
      for (std::size_t k = 0; k < K; ++k) next[k] -= coef * grad[k];
      std::sort(next.begin(), next.end());
      cb.items[d] = std::move(next);
    }
  }
}

std::size_t AttackSpace::max_per_dim() const {
  return per_dim.empty() ? 0 : *std::max_element(per_dim.begin(), per_dim.end());
}

double AttackSpace::mean_per_dim() const {
  if (per_dim.empty()) return 0.0;
  double s = std::accumulate(per_dim.begin(), per_dim.end(), 0.0);
  return s / static_cast<double>(per_dim.size());
}

AttackSpace attack_space_size(std::span<const double> s, double eps,
                              const PerDimCodebooks& cb) {
  if (eps < 0.0) throw std::invalid_argument("attack_space_size: eps must be >= 0");
  if (s.size() != cb.D) throw std::invalid_argument("attack_space_size: dim mismatch");
  AttackSpace out;
  out.per_dim.resize(cb.D);
  for (std::size_t d = 0; d < cb.D; ++d) {
    const Vec& row = cb.row(d);
    const std::size_t K = row.size();
    std::size_t count = 0;
    for (std::size_t k = 0; k < K; ++k) {
      // Cell of item k is (m_{k-1}, m_k], matching tie-break-to-lower.
      bool left_ok = (k == 0) || (0.5 * (row[k - 1] + row[k]) < s[d] + eps);
      bool right_ok = (k + 1 == K) || (0.5 * (row[k] + row[k + 1]) >= s[d] - eps);
      if (left_ok && right_ok) ++count;
    }
    out.per_dim[d] = count;
    out.log_total += std::log(static_cast<double>(count));
  }
  return out;
}

Vec bdr_quantize(std::span<const double> s, int bits, const BdrRange& range) {
  if (bits < 1) throw std::invalid_argument("bdr_quantize: bits must be >= 1");
  if (range.lo.size() != s.size() || range.hi.size() != s.size()) {
    throw std::invalid_argument("bdr_quantize: range dim mismatch");
  }
  const double levels = std::ldexp(1.0, bits) - 1.0;  // 2^bits - 1 intervals
  Vec out(s.size());
  for (std::size_t d = 0; d < s.size(); ++d) {
    double lo = range.lo[d], hi = range.hi[d];
    if (hi < lo) throw std::invalid_argument("bdr_quantize: invalid range at dim " +
                                             std::to_string(d));
    if (hi == lo) {
      out[d] = lo;
      continue;
    }
    double v = std::clamp(s[d], lo, hi);
    double idx = std::round((v - lo) / (hi - lo) * levels);
    out[d] = lo + idx * (hi - lo) / levels;
  }
  return out;
}

BdrRange bdr_range_from_batch(const Batch& batch) {
  if (batch.empty()) throw std::invalid_argument("bdr_range_from_batch: empty batch");
  const std::size_t D = batch.front().size();
  BdrRange r;
  r.lo.assign(D, std::numeric_limits<double>::infinity());
  r.hi.assign(D, -std::numeric_limits<double>::infinity());
  for (const Vec& row : batch) {
    for (std::size_t d = 0; d < D; ++d) {
      r.lo[d] = std::min(r.lo[d], row[d]);
      r.hi[d] = std::max(r.hi[d], row[d]);
    }
  }
  return r;
}

void save_codebooks(const PerDimCodebooks& cb, std::ostream& os) {
  os << "vqcb 1 " << cb.D << " " << cb.K << " "
     << (cb.shared ? "shared" : "separate") << "\n";
  char buf[64];
  for (const Vec& row : cb.items) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      std::snprintf(buf, sizeof(buf), "%a", row[k]);
      os << (k ? " " : "") << buf;
    }
    os << "\n";
  }
}

PerDimCodebooks load_codebooks(std::istream& is) {
  std::string magic, mode;
  int version = 0;
  std::size_t D = 0, K = 0;
  is >> magic >> version >> D >> K >> mode;
  if (!is || magic != "vqcb") throw std::runtime_error("load_codebooks: bad header");
  if (version != 1) throw std::runtime_error("load_codebooks: unsupported version " +
                                             std::to_string(version));
  PerDimCodebooks cb;
  cb.D = D;
  cb.K = K;
  cb.shared = (mode == "shared");
  std::size_t rows = cb.shared ? 1 : D;
  cb.items.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    cb.items[r].resize(K);
    for (std::size_t k = 0; k < K; ++k) {
      std::string tok;
      if (!(is >> tok)) throw std::runtime_error("load_codebooks: truncated table");
      cb.items[r][k] = std::strtod(tok.c_str(), nullptr);
    }
    if (!std::is_sorted(cb.items[r].begin(), cb.items[r].end())) {
      throw std::runtime_error("load_codebooks: row " + std::to_string(r) +
                               " is not sorted");
    }
  }
  return cb;
}

void save_codebooks_file(const PerDimCodebooks& cb, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_codebooks: cannot open " + path);
  save_codebooks(cb, os);
}

PerDimCodebooks load_codebooks_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_codebooks: cannot open " + path);
  return load_codebooks(is);
}

}  // namespace vqrl::vq
