#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vqrl/agent.hpp"
#include "vqrl/attacks.hpp"
#include "vqrl/envs.hpp"

namespace vqrl::eval {

struct PerturbationCurve {
  std::vector<double> eps_grid;  // strictly increasing, starts at 0
  std::vector<double> returns;   // mean return per grid point
  std::vector<double> stds;
  std::size_t episodes_per_point = 50;
};

struct RobustnessScore {
  double value = 0.0;  // in [0, 1]
  double r_min = 0.0;
  double r_max = 0.0;
};

struct EpisodeRecord {
  double eps = 0.0;
  double episode_return = 0.0;
  double mean_l2_transformed = 0.0;  // mean ||T(s) - T(s_hat)||_2 over the episode
  double mean_linf_raw = 0.0;
};

struct CurveResult {
  PerturbationCurve curve;
  std::vector<EpisodeRecord> episodes;  // per grid point x episode
};

/// Runs `episodes` seeded episodes per grid value; the attacker perturbs
/// every observation and the agent acts deterministically on transform(s_hat).
CurveResult evaluate_curve(agent::SacAgent& agent, envs::Env& env,
                           attacks::AttackKind kind,
                           const std::vector<double>& eps_grid,
                           std::size_t episodes, std::uint64_t seed);

/// Mean of min-max-normalized returns, clipped to [0, 1] per point.
RobustnessScore robustness_score(const PerturbationCurve& curve, double r_min,
                                 double r_max);

/// Spearman rank correlation with average ranks on ties.
/// Needs at least 10 pairs.
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

/// rho between per-episode transformed-input difference and relative
/// return drop (versus the eps=0 mean).
double spearman_input_vs_gap(const std::vector<EpisodeRecord>& records);

struct VariantRun {
  std::string variant;                 // none / bdr / vq / sa / sa-vq
  std::string attack;
  PerturbationCurve curve;
};

struct ComparisonRow {
  std::string variant;
  std::vector<std::string> attacks;
  std::vector<double> rc;  // one per attack
  double average = 0.0;
};

/// Per-variant RC per attack plus the row average. All runs must share
/// the same eps grid.
std::vector<ComparisonRow> compare_variants(const std::vector<VariantRun>& runs,
                                            double r_min, double r_max);

// CSV output (plot-ready, deterministic formatting).
void write_curves_csv(const std::vector<VariantRun>& runs, const std::string& path);
void write_scores_csv(const std::vector<ComparisonRow>& rows, const std::string& path);
void write_correlation_csv(const std::vector<EpisodeRecord>& records, double rho,
                           const std::string& path);
std::string comparison_table_text(const std::vector<ComparisonRow>& rows);

std::vector<double> default_eps_grid(const std::string& env_name);

}  // namespace vqrl::eval
