#include "vqrl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace vqrl::eval {

namespace {

void check_grid(const std::vector<double>& grid) {
  if (grid.empty() || grid.front() != 0.0) {
    throw std::invalid_argument("eps grid must start at 0");
  }
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (grid[i] <= grid[i - 1]) {
      throw std::invalid_argument("eps grid must be strictly increasing");
    }
  }
}

}  // namespace

CurveResult evaluate_curve(agent::SacAgent& agent_, envs::Env& env,
                           attacks::AttackKind kind,
                           const std::vector<double>& eps_grid,
                           std::size_t episodes, std::uint64_t seed) {
  check_grid(eps_grid);
  if (env.metadata().obs_dim != agent_.env_meta().obs_dim) {
    throw std::invalid_argument("evaluate_curve: env/agent observation dims differ");
  }

  std::uint64_t hash_before = agent_.content_hash();

  CurveResult out;
  out.curve.eps_grid = eps_grid;
  out.curve.episodes_per_point = episodes;

  for (std::size_t gi = 0; gi < eps_grid.size(); ++gi) {
    double eps = eps_grid[gi];
    attacks::AttackConfig cfg;
    cfg.kind = kind;
    cfg.eps = eps;

    std::vector<double> returns(episodes);
    for (std::size_t ep = 0; ep < episodes; ++ep) {
      // One rng per (grid point, episode): episodes are order-independent.
      Rng rng(seed ^ (0x9E3779B97F4A7C15ull * (gi * 1000 + ep + 1)));
      auto e = env.clone_fresh();
      envs::Vec obs = e->reset(seed * 7919 + gi * 131 + ep);
      double ret = 0.0, l2_sum = 0.0, linf_sum = 0.0;
      std::size_t steps = 0;
      bool done = false;
      while (!done) {
        envs::Vec s_hat = eps == 0.0
                              ? obs
                              : attacks::attack_observation(agent_, obs, cfg, rng);
        envs::Vec a = agent_.act(s_hat, /*deterministic=*/true);
        envs::Vec ts = agent_.transform_obs(obs);
        envs::Vec tsh = agent_.transform_obs(s_hat);
        double l2 = 0.0, linf = 0.0;
        for (std::size_t d = 0; d < ts.size(); ++d) {
          l2 += (ts[d] - tsh[d]) * (ts[d] - tsh[d]);
          linf = std::max(linf, std::abs(s_hat[d] - obs[d]));
        }
        l2_sum += std::sqrt(l2);
        linf_sum += linf;
        envs::Transition tr = e->step(a);
        ret += tr.r;
        obs = tr.s_next;
        done = tr.done;
        ++steps;
      }
      returns[ep] = ret;
      EpisodeRecord rec;
      rec.eps = eps;
      rec.episode_return = ret;
      rec.mean_l2_transformed = l2_sum / static_cast<double>(steps);
      rec.mean_linf_raw = linf_sum / static_cast<double>(steps);
      out.episodes.push_back(rec);
    }
    double mean = std::accumulate(returns.begin(), returns.end(), 0.0) /
                  static_cast<double>(episodes);
    double var = 0.0;
    for (double r : returns) var += (r - mean) * (r - mean);
    var /= static_cast<double>(episodes);
    out.curve.returns.push_back(mean);
    out.curve.stds.push_back(std::sqrt(var));
  }

  if (agent_.content_hash() != hash_before) {
    throw std::logic_error("evaluate_curve: agent was mutated during evaluation");
  }
  return out;
}

RobustnessScore robustness_score(const PerturbationCurve& curve, double r_min,
                                 double r_max) {
  if (r_max <= r_min) throw std::invalid_argument("robustness_score: need r_max > r_min");
  if (curve.returns.empty()) throw std::invalid_argument("robustness_score: empty curve");
  RobustnessScore rc;
  rc.r_min = r_min;
  rc.r_max = r_max;
  double sum = 0.0;
  for (double r : curve.returns) {
    double norm = (r - r_min) / (r_max - r_min);
    sum += std::clamp(norm, 0.0, 1.0);
  }
  rc.value = sum / static_cast<double>(curve.returns.size());
  return rc;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return v[a] < v[b];
  });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    double rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based average rank
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("spearman: size mismatch");
  if (xs.size() < 10) {
    throw std::invalid_argument("spearman: need at least 10 pairs, got " +
                                std::to_string(xs.size()));
  }
  std::vector<double> rx = average_ranks(xs);
  std::vector<double> ry = average_ranks(ys);
  double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / rx.size();
  double my = std::accumulate(ry.begin(), ry.end(), 0.0) / ry.size();
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double spearman_input_vs_gap(const std::vector<EpisodeRecord>& records) {
  double nat_sum = 0.0;
  std::size_t nat_n = 0;
  for (const EpisodeRecord& r : records) {
    if (r.eps == 0.0) {
      nat_sum += r.episode_return;
      ++nat_n;
    }
  }
  if (nat_n == 0) throw std::invalid_argument("spearman_input_vs_gap: no eps=0 episodes");
  double nat = nat_sum / static_cast<double>(nat_n);
  double denom = std::max(std::abs(nat), 1e-12);

  std::vector<double> xs, ys;
  for (const EpisodeRecord& r : records) {
    xs.push_back(r.mean_l2_transformed);
    ys.push_back((nat - r.episode_return) / denom);
  }
  return spearman(xs, ys);
}

std::vector<ComparisonRow> compare_variants(const std::vector<VariantRun>& runs,
                                            double r_min, double r_max) {
  if (runs.empty()) return {};
  const std::vector<double>& grid = runs.front().curve.eps_grid;
  for (const VariantRun& r : runs) {
    if (r.curve.eps_grid != grid) {
      throw std::invalid_argument("compare_variants: runs use different eps grids");
    }
  }
  // Preserve first-seen variant order.
  std::vector<ComparisonRow> rows;
  for (const VariantRun& r : runs) {
    ComparisonRow* row = nullptr;
    for (ComparisonRow& existing : rows) {
      if (existing.variant == r.variant) row = &existing;
    }
    if (!row) {
      rows.push_back(ComparisonRow{r.variant, {}, {}, 0.0});
      row = &rows.back();
    }
    row->attacks.push_back(r.attack);
    row->rc.push_back(robustness_score(r.curve, r_min, r_max).value);
  }
  for (ComparisonRow& row : rows) {
    row.average = std::accumulate(row.rc.begin(), row.rc.end(), 0.0) /
                  static_cast<double>(row.rc.size());
  }
  return rows;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_curves_csv(const std::vector<VariantRun>& runs, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_curves_csv: cannot open " + path);
  os << "variant,attack,eps,mean,std,n\n";
  for (const VariantRun& r : runs) {
    for (std::size_t i = 0; i < r.curve.eps_grid.size(); ++i) {
      os << r.variant << "," << r.attack << "," << fmt(r.curve.eps_grid[i]) << ","
         << fmt(r.curve.returns[i]) << "," << fmt(r.curve.stds[i]) << ","
         << r.curve.episodes_per_point << "\n";
    }
  }
}

void write_scores_csv(const std::vector<ComparisonRow>& rows, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_scores_csv: cannot open " + path);
  os << "variant,attack,rc\n";
  for (const ComparisonRow& row : rows) {
    for (std::size_t i = 0; i < row.attacks.size(); ++i) {
      os << row.variant << "," << row.attacks[i] << "," << fmt(row.rc[i]) << "\n";
    }
    os << row.variant << ",average," << fmt(row.average) << "\n";
  }
}

void write_correlation_csv(const std::vector<EpisodeRecord>& records, double rho,
                           const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_correlation_csv: cannot open " + path);
  os << "eps,episode_return,mean_l2_transformed,mean_linf_raw\n";
  for (const EpisodeRecord& r : records) {
    os << fmt(r.eps) << "," << fmt(r.episode_return) << ","
       << fmt(r.mean_l2_transformed) << "," << fmt(r.mean_linf_raw) << "\n";
  }
  os << "# spearman_rho," << fmt(rho) << "\n";
}

std::string comparison_table_text(const std::vector<ComparisonRow>& rows) {
  std::string out;
  char buf[160];
  if (rows.empty()) return out;
  out += "variant";
  for (const std::string& a : rows.front().attacks) out += "\t" + a;
  out += "\taverage\n";
  double best = -1.0;
  for (const ComparisonRow& r : rows) best = std::max(best, r.average);
  for (const ComparisonRow& r : rows) {
    out += r.variant;
    for (double v : r.rc) {
      std::snprintf(buf, sizeof(buf), "\t%.3f", v);
      out += buf;
    }
    std::snprintf(buf, sizeof(buf), "\t%.3f%s\n", r.average,
                  r.average == best ? " *" : "");
    out += buf;
  }
  return out;
}

std::vector<double> default_eps_grid(const std::string& env_name) {
  if (env_name == "pendulum") return {0.0, 0.05, 0.1, 0.15, 0.2, 0.3};
  if (env_name == "reacher") return {0.0, 0.02, 0.05, 0.1, 0.15};
  throw std::invalid_argument("default_eps_grid: unknown env '" + env_name + "'");
}

}  // namespace vqrl::eval
