#pragma once

#include <string>
#include <vector>

#include "qdiff/experiment.hpp"

namespace qdiff {

/// Streaming first and second moments of a matrix-valued sample A and a
/// scalar weight w, mergeable in a fixed order (Chan et al. pairwise update).
class Moments {
 public:
  Moments() = default;
  explicit Moments(Index dim);

  void add(const Matrix& a, double w);
  void merge(const Moments& other);

  double count() const { return n_; }
  Index dim() const { return mean_re_.rows(); }

  /// Unweighted mean of A and its standard error (real, imaginary parts).
  Matrix mean() const;
  Eigen::MatrixXd se_re() const;
  Eigen::MatrixXd se_im() const;

  /// Ratio estimator ΣA / Σw and its delta-method standard error.
  Matrix weighted_mean() const;
  Eigen::MatrixXd weighted_se_re() const;
  Eigen::MatrixXd weighted_se_im() const;

  double weight_mean() const { return mean_w_; }
  double weight_se() const;
  double weight_variance() const;
  /// (Σw)² / Σw²
  double effective_sample_size() const;

 private:
  double n_ = 0;
  double mean_w_ = 0;
  double m2_w_ = 0;
  Eigen::MatrixXd mean_re_, mean_im_, m2_re_, m2_im_, c_re_, c_im_;
};

/// Ensemble statistics at one recorded time.
struct TimePointStats {
  double time = 0;
  /// Estimate of the normalized state: ΣR/Σw for the linear engine, the
  /// plain mean of ρ otherwise.
  Matrix rho;
  Eigen::MatrixXd rho_se_re, rho_se_im;
  /// Unweighted mean of the raw engine state (R for the linear engine).
  Matrix raw;
  Eigen::MatrixXd raw_se_re, raw_se_im;
  /// Batch-means standard errors of `raw`.
  Eigen::MatrixXd raw_bm_se_re, raw_bm_se_im;
  double weight_mean = 1;
  double weight_se = 0;
  double weight_variance = 0;
  double neff = 0;
  double count = 0;
  /// Weighted means Tr(O·raw)/Σw of the requested expectation operators.
  std::vector<Complex<double>> expect;
  std::vector<double> expect_se;
};

struct EnsembleOptions {
  /// 0 picks std::thread::hardware_concurrency().
  int workers = 1;
  /// Reductions always follow trajectory-index order; kept for the CLI
  /// contract.
  bool bit_exact = true;
  /// Operators whose expectations are tracked per recorded time.
  std::vector<Matrix> expectations;
};

struct EnsembleResult {
  ExperimentSpec spec;
  std::vector<MeasurementOutcome> outcomes;
  std::vector<TimePointStats> series;
  std::vector<std::string> warnings;
  std::vector<long> failed;

  bool ok() const { return failed.empty(); }
};

/// Trajectories per reduction block. Blocks are fixed by index so results
/// do not depend on scheduling.
inline constexpr long kBlockSize = 8;

EnsembleResult run_ensemble(const ExperimentSpec& spec, const EnsembleOptions& opts = {});

/// Σ w_i ρ_i / Σ w_i, re-symmetrized.
DensityMatrix weighted_mean_state(const std::vector<DensityMatrix>& states,
                                  const std::vector<double>& weights);

enum class ConvergenceStatus { Pass, Fail, Inconclusive, Exact };
std::string to_string(ConvergenceStatus s);

struct ConvergenceEntry {
  std::string observable;
  std::vector<double> bias;
  std::vector<double> se;
  double slope = 0;
  ConvergenceStatus status = ConvergenceStatus::Inconclusive;
};

struct ConvergenceReport {
  std::vector<double> dt;
  std::vector<ConvergenceEntry> entries;
  ConvergenceStatus overall = ConvergenceStatus::Inconclusive;
};

/// Weak-order check of the engine in `spec`: bias of the mean state at
/// t_max against the RK4 reference for each dt, log-log slope in [0.7, 1.3].
ConvergenceReport convergence_report(const ExperimentSpec& spec, const std::vector<double>& dt_list,
                                     const EnsembleOptions& opts = {});

}  // namespace qdiff
