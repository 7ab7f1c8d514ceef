#pragma once

// Estimators applied to measurement ensembles: endpoint frequencies,
// off-diagonal decay rates, the diagonal martingale check and cross-engine
// comparisons.

#include <optional>
#include <string>
#include <vector>

#include "qdiff/ensemble.hpp"

namespace qdiff {

struct FrequencyEstimate {
  std::vector<double> frequency;
  std::vector<double> se;
};

struct BornReport {
  /// Expected frequencies: the initial diagonals.
  std::vector<double> expected;
  /// Resolved trajectories count their endpoint; unresolved ones contribute
  /// their current diagonals.
  FrequencyEstimate assigned;
  /// Resolved trajectories only, renormalized over them.
  FrequencyEstimate resolved_only;
  /// (assigned − expected) / se per outcome.
  std::vector<double> z;
  long resolved = 0;
  long unresolved = 0;
  long dead = 0;
  long failed = 0;
  bool weighted = false;
  /// (Σw)²/Σw² over the trajectories used.
  double effective_sample_size = 0;
  /// Largest |z| between the assigned and resolved-only estimates.
  double assignment_gap_z = 0;
};

/// Endpoint frequencies with standard errors. Linear-engine outcomes are
/// weighted by their final weight. Failed trajectories are counted and
/// excluded.
BornReport estimate_born_frequencies(const std::vector<MeasurementOutcome>& outcomes,
                                     const DensityMatrix& initial);

/// z = (a − b) / sqrt(se_a² + se_b²); zero when both the difference and the
/// errors vanish.
double z_score(double a, double se_a, double b, double se_b);

/// Per-outcome z-scores between two frequency estimates.
std::vector<double> compare_frequencies(const FrequencyEstimate& a, const FrequencyEstimate& b);

struct OffDiagonalSeries {
  std::vector<double> times;
  std::vector<Complex<double>> mean;
  std::vector<double> se;
  long trajectories = 0;
};

/// Ensemble mean of ρ_mn(t) with its standard error |(se_re, se_im)|.
OffDiagonalSeries offdiagonal_series(const EnsembleResult& result, Index m, Index n);

struct DecoherenceFit {
  double rate = 0;
  double se = 0;
  std::size_t points = 0;
  double t_begin = 0;
  double t_end = 0;
};

/// Least-squares slope of log|mean ρ_mn(t)| over the leading window where
/// |mean| > 10·se. Throws InvalidArgument if fewer than 100 trajectories,
/// ρ_mn(0) = 0 or the window has fewer than two points.
DecoherenceFit fit_decoherence_rate(const OffDiagonalSeries& series);

/// Expected decay rate of ρ_mn for the spec's Lindblad set, if known in
/// closed form.
std::optional<double> expected_decoherence_rate(const ExperimentSpec& spec, Index m, Index n);

struct DiagonalSeries {
  std::vector<double> times;
  /// mean[k][m], se[k][m]
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<double>> se;
  long trajectories = 0;
};

DiagonalSeries diagonal_series(const EnsembleResult& result);

struct MartingaleReport {
  double worst_z = 0;
  int worst_index = 0;
  double worst_time = 0;
  bool pass = true;
};

/// |mean p_m(t) − p_m(0)| < 4·se(p_m(t)) at every recorded time.
MartingaleReport check_martingale(const DiagonalSeries& series);

/// Max over recorded times and entries of |mean ρ − reference| together with
/// the 4·se + Euler-bias allowance at the same entry.
struct MeanStateDistance {
  double distance = 0;
  double allowance = 0;
  double worst_ratio = 0;
  bool within = true;
};

MeanStateDistance mean_state_vs_reference(const EnsembleResult& result, bool use_raw);

/// Largest entrywise difference between two ensembles' mean states over the
/// recorded times, against 4·(combined se) + Euler bias.
MeanStateDistance compare_mean_states(const EnsembleResult& a, const EnsembleResult& b);

/// Largest Frobenius distance between |ψ⟩⟨ψ| from the state-vector engine
/// and ρ from the density engine, driven by the same noise, over the first
/// `trajectories` indices. Requires a pure initial state.
double pathwise_distance(const ExperimentSpec& spec, long trajectories);

/// Per-trajectory maxima over time of the same distance.
std::vector<double> pathwise_distances(const ExperimentSpec& spec, long trajectories);

}  // namespace qdiff
