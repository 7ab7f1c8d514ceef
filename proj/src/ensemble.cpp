#include "qdiff/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "qdiff/lindblad.hpp"

namespace qdiff {

Moments::Moments(Index dim)
    : mean_re_(Eigen::MatrixXd::Zero(dim, dim)),
      mean_im_(Eigen::MatrixXd::Zero(dim, dim)),
      m2_re_(Eigen::MatrixXd::Zero(dim, dim)),
      m2_im_(Eigen::MatrixXd::Zero(dim, dim)),
      c_re_(Eigen::MatrixXd::Zero(dim, dim)),
      c_im_(Eigen::MatrixXd::Zero(dim, dim)) {}

void Moments::add(const Matrix& a, double w) {
  n_ += 1;
  const double dw = w - mean_w_;
  mean_w_ += dw / n_;
  const double dw_after = w - mean_w_;
  m2_w_ += dw * dw_after;
  const Eigen::MatrixXd re = a.real();
  const Eigen::MatrixXd im = a.imag();
  const Eigen::MatrixXd d_re = re - mean_re_;
  const Eigen::MatrixXd d_im = im - mean_im_;
  mean_re_ += d_re / n_;
  mean_im_ += d_im / n_;
  m2_re_.array() += d_re.array() * (re - mean_re_).array();
  m2_im_.array() += d_im.array() * (im - mean_im_).array();
  c_re_ += d_re * dw_after;
  c_im_ += d_im * dw_after;
}

void Moments::merge(const Moments& o) {
  if (o.n_ == 0) return;
  if (n_ == 0) {
    *this = o;
    return;
  }
  const double n = n_ + o.n_;
  const double f = n_ * o.n_ / n;
  const double dw = o.mean_w_ - mean_w_;
  const Eigen::MatrixXd d_re = o.mean_re_ - mean_re_;
  const Eigen::MatrixXd d_im = o.mean_im_ - mean_im_;
  m2_w_ += o.m2_w_ + dw * dw * f;
  m2_re_.array() += o.m2_re_.array() + d_re.array().square() * f;
  m2_im_.array() += o.m2_im_.array() + d_im.array().square() * f;
  c_re_ += o.c_re_ + d_re * (dw * f);
  c_im_ += o.c_im_ + d_im * (dw * f);
  mean_w_ += dw * o.n_ / n;
  mean_re_ += d_re * (o.n_ / n);
  mean_im_ += d_im * (o.n_ / n);
  n_ = n;
}

Matrix Moments::mean() const {
  Matrix out(dim(), dim());
  out.real() = mean_re_;
  out.imag() = mean_im_;
  return out;
}

namespace {

Eigen::MatrixXd sample_se(const Eigen::MatrixXd& m2, double n) {
  if (n < 2) return Eigen::MatrixXd::Zero(m2.rows(), m2.cols());
  return (m2.array().max(0.0) / (n * (n - 1))).sqrt();
}

}  // namespace

Eigen::MatrixXd Moments::se_re() const { return sample_se(m2_re_, n_); }
Eigen::MatrixXd Moments::se_im() const { return sample_se(m2_im_, n_); }

Matrix Moments::weighted_mean() const {
  Matrix out(dim(), dim());
  out.real() = mean_re_ / mean_w_;
  out.imag() = mean_im_ / mean_w_;
  return out;
}

// Σ(A − ρ̂ w)² = M2_A − 2ρ̂ C_Aw + ρ̂² M2_w with ρ̂ = Ā / w̄.
Eigen::MatrixXd Moments::weighted_se_re() const {
  if (n_ < 2) return Eigen::MatrixXd::Zero(dim(), dim());
  const Eigen::ArrayXXd r = mean_re_.array() / mean_w_;
  const Eigen::ArrayXXd ss = m2_re_.array() - 2 * r * c_re_.array() + r.square() * m2_w_;
  return (ss.max(0.0) * (n_ / (n_ - 1))).sqrt() / (n_ * mean_w_);
}

Eigen::MatrixXd Moments::weighted_se_im() const {
  if (n_ < 2) return Eigen::MatrixXd::Zero(dim(), dim());
  const Eigen::ArrayXXd r = mean_im_.array() / mean_w_;
  const Eigen::ArrayXXd ss = m2_im_.array() - 2 * r * c_im_.array() + r.square() * m2_w_;
  return (ss.max(0.0) * (n_ / (n_ - 1))).sqrt() / (n_ * mean_w_);
}

double Moments::weight_variance() const { return n_ < 2 ? 0.0 : m2_w_ / (n_ - 1); }
double Moments::weight_se() const { return n_ < 2 ? 0.0 : std::sqrt(weight_variance() / n_); }

double Moments::effective_sample_size() const {
  const double sum = n_ * mean_w_;
  const double sum_sq = m2_w_ + n_ * mean_w_ * mean_w_;
  return sum_sq > 0 ? sum * sum / sum_sq : 0.0;
}

namespace {

/// Pairwise merge of parts[lo, hi) in index order.
Moments tree_reduce(const std::vector<Moments>& parts, std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return parts[lo];
  const std::size_t mid = lo + (hi - lo) / 2;
  Moments left = tree_reduce(parts, lo, mid);
  left.merge(tree_reduce(parts, mid, hi));
  return left;
}

struct BlockResult {
  std::vector<Moments> records;
  /// expect[k][o]: scalar moments of operator o at record k.
  std::vector<std::vector<Moments>> expect;
  std::vector<long> failed;
  std::vector<std::string> messages;
};

}  // namespace

EnsembleResult run_ensemble(const ExperimentSpec& spec, const EnsembleOptions& opts) {
  validate(spec);
  const TrajectoryPlan plan(spec);
  const LindbladSet& ls = plan.ls;
  for (const auto& op : opts.expectations) {
    if (op.rows() != spec.dim || op.cols() != spec.dim) {
      throw InvalidArgument("run_ensemble: expectation operator dimension mismatch");
    }
  }
  EnsembleResult result;
  result.spec = spec;
  if (check_step_size(ls, spec.dt) == StepGuard::Warn) {
    result.warnings.push_back("dt*max|L|^2 exceeds 0.1; consider a smaller dt");
  }

  const std::size_t n_records = plan.records.size();
  const long n = spec.trajectories;
  const long n_blocks = (n + kBlockSize - 1) / kBlockSize;
  result.outcomes.resize(std::size_t(n));
  std::vector<BlockResult> blocks(static_cast<std::size_t>(n_blocks));

  auto run_block = [&](long b) {
    BlockResult& block = blocks[std::size_t(b)];
    block.records.assign(n_records, Moments(spec.dim));
    block.expect.assign(n_records, std::vector<Moments>(opts.expectations.size(), Moments(1)));
    std::vector<std::pair<Matrix, double>> buffer(n_records);
    TrajectoryObserver obs;
    obs.on_record = [&](std::size_t k, const Snapshot& s) { buffer[k] = {s.raw, s.weight}; };
    const long end = std::min(n, (b + 1) * kBlockSize);
    for (long i = b * kBlockSize; i < end; ++i) {
      try {
        result.outcomes[std::size_t(i)] = run_measurement_trajectory(plan, i, obs);
        for (std::size_t k = 0; k < n_records; ++k) {
          block.records[k].add(buffer[k].first, buffer[k].second);
          for (std::size_t o = 0; o < opts.expectations.size(); ++o) {
            Matrix value(1, 1);
            value(0, 0) = (opts.expectations[o] * buffer[k].first).trace();
            block.expect[k][o].add(value, buffer[k].second);
          }
        }
      } catch (const TrajectoryFailure& e) {
        MeasurementOutcome& o = result.outcomes[std::size_t(i)];
        o.trajectory_index = i;
        o.engine = spec.engine;
        o.status = TrajectoryStatus::Failed;
        o.message = e.what();
        block.failed.push_back(i);
      }
    }
  };

  int workers = opts.workers > 0 ? opts.workers : int(std::max(1u, std::thread::hardware_concurrency()));
  workers = int(std::min<long>(workers, n_blocks));
  if (workers <= 1) {
    for (long b = 0; b < n_blocks; ++b) run_block(b);
  } else {
    std::atomic<long> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        try {
          for (long b = next++; b < n_blocks; b = next++) run_block(b);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
  }

  for (const auto& block : blocks) {
    result.failed.insert(result.failed.end(), block.failed.begin(), block.failed.end());
  }

  result.series.resize(n_records);
  std::vector<Moments> parts(static_cast<std::size_t>(n_blocks));
  bool neff_collapse = false;
  for (std::size_t k = 0; k < n_records; ++k) {
    for (long b = 0; b < n_blocks; ++b) parts[std::size_t(b)] = blocks[std::size_t(b)].records[k];
    const Moments total = tree_reduce(parts, 0, parts.size());
    TimePointStats& s = result.series[k];
    s.time = double(plan.records[k]) * spec.dt;
    s.count = total.count();
    if (total.count() == 0) continue;
    s.raw = total.mean();
    s.raw_se_re = total.se_re();
    s.raw_se_im = total.se_im();
    s.rho = total.weighted_mean();
    s.rho_se_re = total.weighted_se_re();
    s.rho_se_im = total.weighted_se_im();
    s.weight_mean = total.weight_mean();
    s.weight_se = total.weight_se();
    s.weight_variance = total.weight_variance();
    s.neff = total.effective_sample_size();
    for (std::size_t o = 0; o < opts.expectations.size(); ++o) {
      std::vector<Moments> scalar(static_cast<std::size_t>(n_blocks));
      for (long b = 0; b < n_blocks; ++b) scalar[std::size_t(b)] = blocks[std::size_t(b)].expect[k][o];
      const Moments e = tree_reduce(scalar, 0, scalar.size());
      s.expect.push_back(e.weighted_mean()(0, 0));
      s.expect_se.push_back(std::hypot(e.weighted_se_re()(0, 0), e.weighted_se_im()(0, 0)));
    }
    if (spec.engine == Engine::LinearWeighted && s.neff < 0.01 * total.count()) neff_collapse = true;

    // Batch means over the reduction blocks.
    Eigen::MatrixXd acc_re = Eigen::MatrixXd::Zero(spec.dim, spec.dim);
    Eigen::MatrixXd acc_im = Eigen::MatrixXd::Zero(spec.dim, spec.dim);
    double used = 0;
    for (const auto& part : parts) {
      if (part.count() == 0) continue;
      const double f = part.count() / total.count();
      acc_re.array() += f * f * (part.mean().real() - s.raw.real()).array().square();
      acc_im.array() += f * f * (part.mean().imag() - s.raw.imag()).array().square();
      used += 1;
    }
    const double scale = used > 1 ? used / (used - 1) : 0.0;
    s.raw_bm_se_re = (acc_re * scale).cwiseSqrt();
    s.raw_bm_se_im = (acc_im * scale).cwiseSqrt();
  }
  if (neff_collapse) {
    result.warnings.push_back("weight degeneracy: effective sample size fell below 1% of N");
  }
  long dead = 0;
  for (const auto& o : result.outcomes) dead += o.status == TrajectoryStatus::Dead;
  if (dead > 0) result.warnings.push_back(std::to_string(dead) + " trajectories reached the weight floor");
  return result;
}

DensityMatrix weighted_mean_state(const std::vector<DensityMatrix>& states,
                                  const std::vector<double>& weights) {
  if (states.empty() || states.size() != weights.size()) {
    throw InvalidArgument("weighted_mean_state: need equally many states and weights");
  }
  const Index dim = states.front().dim();
  Matrix acc = Matrix::Zero(dim, dim);
  double total = 0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (states[i].dim() != dim) throw InvalidArgument("weighted_mean_state: dimension mismatch");
    if (weights[i] == 0) continue;
    acc += weights[i] * states[i].matrix();
    total += weights[i];
  }
  if (total == 0) throw InvalidArgument("weighted_mean_state: all weights are zero");
  acc /= total;
  acc = (acc + acc.adjoint()).eval() * 0.5;
  return DensityMatrix::unchecked(acc);
}

std::string to_string(ConvergenceStatus s) {
  switch (s) {
    case ConvergenceStatus::Pass: return "PASS";
    case ConvergenceStatus::Fail: return "FAIL";
    case ConvergenceStatus::Inconclusive: return "INCONCLUSIVE";
    case ConvergenceStatus::Exact: return "EXACT";
  }
  return "?";
}

namespace {

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = double(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

ConvergenceReport convergence_report(const ExperimentSpec& spec, const std::vector<double>& dt_list,
                                     const EnsembleOptions& opts) {
  if (dt_list.size() < 2) throw InvalidArgument("convergence_report: need at least two dt values");
  for (std::size_t i = 1; i < dt_list.size(); ++i) {
    if (!(dt_list[i] < dt_list[i - 1])) throw InvalidArgument("convergence_report: dt values must decrease");
  }
  const LindbladSet ls = lindblad_set(spec);
  const DensityMatrix rho0(spec.initial);
  const Matrix reference = evolve_mean(rho0, ls, spec.t_max, 4000).states.back().matrix();

  ConvergenceReport report;
  report.dt = dt_list;
  const Index d = spec.dim;
  std::vector<ConvergenceEntry> entries;
  ConvergenceEntry trace_entry;
  trace_entry.observable = "trace";
  for (Index i = 0; i < d; ++i) {
    for (Index j = i; j < d; ++j) {
      ConvergenceEntry re, im;
      re.observable = "re[" + std::to_string(i) + "," + std::to_string(j) + "]";
      im.observable = "im[" + std::to_string(i) + "," + std::to_string(j) + "]";
      entries.push_back(re);
      if (i != j) entries.push_back(im);
    }
  }
  for (double dt : dt_list) {
    ExperimentSpec s = spec;
    s.dt = dt;
    s.stop_at_endpoint = false;
    s.series_points = 2;
    const EnsembleResult r = run_ensemble(s, opts);
    const TimePointStats& last = r.series.back();
    std::size_t e = 0;
    for (Index i = 0; i < d; ++i) {
      for (Index j = i; j < d; ++j) {
        entries[e].bias.push_back(last.raw(i, j).real() - reference(i, j).real());
        entries[e].se.push_back(last.raw_se_re(i, j));
        ++e;
        if (i != j) {
          entries[e].bias.push_back(last.raw(i, j).imag() - reference(i, j).imag());
          entries[e].se.push_back(last.raw_se_im(i, j));
          ++e;
        }
      }
    }
    trace_entry.bias.push_back(last.raw.trace().real() - 1.0);
    // Tr R = w for the linear engine, so its trace carries weight noise.
    trace_entry.se.push_back(last.weight_se);
  }
  entries.push_back(trace_entry);

  bool any_pass = false, any_fail = false, all_exact = true;
  for (auto& entry : entries) {
    bool exact = true, resolved = true;
    std::vector<double> lx, ly;
    for (std::size_t k = 0; k < dt_list.size(); ++k) {
      const double b = std::abs(entry.bias[k]);
      if (b > 1e-12) exact = false;
      if (b < 3.0 * entry.se[k] || b == 0) resolved = false;
      lx.push_back(std::log(dt_list[k]));
      ly.push_back(std::log(std::max(b, 1e-300)));
    }
    if (exact) {
      entry.status = ConvergenceStatus::Exact;
    } else if (!resolved) {
      entry.status = ConvergenceStatus::Inconclusive;
    } else {
      entry.slope = fit_slope(lx, ly);
      entry.status = (entry.slope >= 0.7 && entry.slope <= 1.3) ? ConvergenceStatus::Pass
                                                                 : ConvergenceStatus::Fail;
    }
    any_pass |= entry.status == ConvergenceStatus::Pass;
    any_fail |= entry.status == ConvergenceStatus::Fail;
    all_exact &= entry.status == ConvergenceStatus::Exact;
  }
  report.entries = std::move(entries);
  report.overall = any_fail   ? ConvergenceStatus::Fail
                   : any_pass ? ConvergenceStatus::Pass
                   : all_exact ? ConvergenceStatus::Exact
                               : ConvergenceStatus::Inconclusive;
  return report;
}

}  // namespace qdiff
