#include "qdiff/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qdiff/lindblad.hpp"

namespace qdiff {

namespace {

FrequencyEstimate ratio_estimate(const std::vector<std::vector<double>>& assign,
                                 const std::vector<double>& w, std::size_t dim) {
  FrequencyEstimate est;
  est.frequency.assign(dim, 0.0);
  est.se.assign(dim, 0.0);
  const double n = double(w.size());
  if (w.empty()) return est;
  double total = 0;
  for (double x : w) total += x;
  if (!(total > 0)) return est;
  for (std::size_t m = 0; m < dim; ++m) {
    double num = 0;
    for (std::size_t i = 0; i < w.size(); ++i) num += w[i] * assign[i][m];
    const double f = num / total;
    double ss = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double r = w[i] * (assign[i][m] - f);
      ss += r * r;
    }
    est.frequency[m] = f;
    est.se[m] = n > 1 ? std::sqrt(ss * n / (n - 1)) / total : 0.0;
  }
  return est;
}

}  // namespace

double z_score(double a, double se_a, double b, double se_b) {
  const double diff = a - b;
  const double se = std::sqrt(se_a * se_a + se_b * se_b);
  if (se == 0) return diff == 0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
  return diff / se;
}

std::vector<double> compare_frequencies(const FrequencyEstimate& a, const FrequencyEstimate& b) {
  if (a.frequency.size() != b.frequency.size()) {
    throw InvalidArgument("compare_frequencies: dimension mismatch");
  }
  std::vector<double> z(a.frequency.size());
  for (std::size_t m = 0; m < z.size(); ++m) {
    z[m] = z_score(a.frequency[m], a.se[m], b.frequency[m], b.se[m]);
  }
  return z;
}

BornReport estimate_born_frequencies(const std::vector<MeasurementOutcome>& outcomes,
                                     const DensityMatrix& initial) {
  if (outcomes.empty()) throw InvalidArgument("estimate_born_frequencies: no outcomes");
  const Engine engine = outcomes.front().engine;
  const std::size_t dim = std::size_t(initial.dim());
  BornReport report;
  report.weighted = engine == Engine::LinearWeighted;
  for (Index m = 0; m < initial.dim(); ++m) report.expected.push_back(initial(m, m).real());

  std::vector<std::vector<double>> assign_all, assign_resolved;
  std::vector<double> w_all, w_resolved;
  for (const auto& o : outcomes) {
    if (o.engine != engine) throw InvalidArgument("estimate_born_frequencies: outcomes from mixed engines");
    if (o.status == TrajectoryStatus::Failed) {
      ++report.failed;
      continue;
    }
    if (o.final_diagonals.size() != dim) {
      throw InvalidArgument("estimate_born_frequencies: outcome dimension mismatch");
    }
    if (o.status == TrajectoryStatus::Dead) ++report.dead;
    const double w = report.weighted ? o.weight_final : 1.0;
    std::vector<double> a(dim, 0.0);
    if (o.endpoint) {
      a[std::size_t(*o.endpoint)] = 1.0;
      ++report.resolved;
      assign_resolved.push_back(a);
      w_resolved.push_back(w);
    } else {
      a = o.final_diagonals;
      ++report.unresolved;
    }
    assign_all.push_back(std::move(a));
    w_all.push_back(w);
  }
  if (w_all.empty()) throw InvalidArgument("estimate_born_frequencies: every trajectory failed");
  report.assigned = ratio_estimate(assign_all, w_all, dim);
  report.resolved_only = ratio_estimate(assign_resolved, w_resolved, dim);
  for (std::size_t m = 0; m < dim; ++m) {
    report.z.push_back(z_score(report.assigned.frequency[m], report.assigned.se[m], report.expected[m], 0));
  }
  double sum = 0, sum_sq = 0;
  for (double w : w_all) {
    sum += w;
    sum_sq += w * w;
  }
  report.effective_sample_size = sum_sq > 0 ? sum * sum / sum_sq : 0;
  if (report.resolved > 0) {
    for (double z : compare_frequencies(report.assigned, report.resolved_only)) {
      report.assignment_gap_z = std::max(report.assignment_gap_z, std::abs(z));
    }
  }
  return report;
}

OffDiagonalSeries offdiagonal_series(const EnsembleResult& result, Index m, Index n) {
  OffDiagonalSeries s;
  s.trajectories = long(result.outcomes.size() - result.failed.size());
  for (const auto& tp : result.series) {
    if (tp.count == 0) continue;
    s.times.push_back(tp.time);
    s.mean.push_back(tp.rho(m, n));
    s.se.push_back(std::hypot(tp.rho_se_re(m, n), tp.rho_se_im(m, n)));
  }
  return s;
}

DecoherenceFit fit_decoherence_rate(const OffDiagonalSeries& series) {
  if (series.trajectories < 100) throw InvalidArgument("fit_decoherence_rate: need >= 100 trajectories");
  if (series.mean.empty() || std::abs(series.mean.front()) == 0) {
    throw InvalidArgument("fit_decoherence_rate: initial off-diagonal element is zero");
  }
  std::vector<double> t, y;
  for (std::size_t k = 0; k < series.mean.size(); ++k) {
    const double mag = std::abs(series.mean[k]);
    if (!(mag > 10.0 * series.se[k])) break;
    t.push_back(series.times[k]);
    y.push_back(std::log(mag));
  }
  if (t.size() < 2) throw InvalidArgument("fit_decoherence_rate: signal below noise floor");
  const double n = double(t.size());
  double tb = 0, yb = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    tb += t[k] / n;
    yb += y[k] / n;
  }
  double stt = 0, sty = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    stt += (t[k] - tb) * (t[k] - tb);
    sty += (t[k] - tb) * (y[k] - yb);
  }
  const double slope = sty / stt;
  double rss = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double r = y[k] - (yb + slope * (t[k] - tb));
    rss += r * r;
  }
  DecoherenceFit fit;
  fit.rate = -slope;
  fit.se = t.size() > 2 ? std::sqrt(rss / (n - 2) / stt) : 0.0;
  fit.points = t.size();
  fit.t_begin = t.front();
  fit.t_end = t.back();
  return fit;
}

std::optional<double> expected_decoherence_rate(const ExperimentSpec& spec, Index m, Index n) {
  if (m == n) return 0.0;
  if (spec.mode == LindbladMode::Projectors) return 2.0;
  const double gap = spec.eigenvalues[std::size_t(m)] - spec.eigenvalues[std::size_t(n)];
  return gap * gap;
}

DiagonalSeries diagonal_series(const EnsembleResult& result) {
  DiagonalSeries s;
  s.trajectories = long(result.outcomes.size() - result.failed.size());
  for (const auto& tp : result.series) {
    if (tp.count == 0) continue;
    s.times.push_back(tp.time);
    std::vector<double> mean, se;
    for (Index m = 0; m < tp.rho.rows(); ++m) {
      mean.push_back(tp.rho(m, m).real());
      se.push_back(tp.rho_se_re(m, m));
    }
    s.mean.push_back(std::move(mean));
    s.se.push_back(std::move(se));
  }
  return s;
}

MartingaleReport check_martingale(const DiagonalSeries& series) {
  MartingaleReport report;
  if (series.mean.empty()) return report;
  const auto& p0 = series.mean.front();
  for (std::size_t k = 0; k < series.mean.size(); ++k) {
    for (std::size_t m = 0; m < p0.size(); ++m) {
      const double z = std::abs(z_score(series.mean[k][m], series.se[k][m], p0[m], 0));
      if (z > report.worst_z) {
        report.worst_z = z;
        report.worst_index = int(m);
        report.worst_time = series.times[k];
      }
    }
  }
  report.pass = report.worst_z < 4.0;
  return report;
}

MeanStateDistance mean_state_vs_reference(const EnsembleResult& result, bool use_raw) {
  const ExperimentSpec& spec = result.spec;
  const LindbladSet ls = lindblad_set(spec);
  const DensityMatrix rho0(spec.initial);
  MeanStateDistance out;
  const std::vector<long> records = spec.record_steps();
  for (std::size_t k = 0; k < result.series.size(); ++k) {
    const TimePointStats& tp = result.series[k];
    if (tp.count == 0 || records[k] == 0) continue;
    const long rk_steps = std::max<long>(200, long(std::ceil(tp.time * 200)));
    const Matrix ref = evolve_mean(rho0, ls, tp.time, rk_steps).states.back().matrix();
    const Matrix euler = euler_mean(rho0, ls, spec.dt, records[k]);
    const Matrix& mean = use_raw ? tp.raw : tp.rho;
    const Eigen::MatrixXd& se_re = use_raw ? tp.raw_se_re : tp.rho_se_re;
    const Eigen::MatrixXd& se_im = use_raw ? tp.raw_se_im : tp.rho_se_im;
    for (Index i = 0; i < spec.dim; ++i) {
      for (Index j = 0; j < spec.dim; ++j) {
        const double d_re = std::abs(mean(i, j).real() - ref(i, j).real());
        const double d_im = std::abs(mean(i, j).imag() - ref(i, j).imag());
        const double a_re = 4.0 * se_re(i, j) + std::abs(euler(i, j).real() - ref(i, j).real()) + 1e-12;
        const double a_im = 4.0 * se_im(i, j) + std::abs(euler(i, j).imag() - ref(i, j).imag()) + 1e-12;
        for (auto [d, a] : {std::pair{d_re, a_re}, std::pair{d_im, a_im}}) {
          if (d > out.distance) {
            out.distance = d;
            out.allowance = a;
          }
          out.worst_ratio = std::max(out.worst_ratio, d / a);
        }
      }
    }
  }
  out.within = out.worst_ratio <= 1.0;
  return out;
}

MeanStateDistance compare_mean_states(const EnsembleResult& a, const EnsembleResult& b) {
  if (a.series.size() != b.series.size() || a.spec.dim != b.spec.dim) {
    throw InvalidArgument("compare_mean_states: ensembles are not comparable");
  }
  const ExperimentSpec& spec = a.spec;
  const LindbladSet ls = lindblad_set(spec);
  const DensityMatrix rho0(spec.initial);
  const std::vector<long> records = spec.record_steps();
  MeanStateDistance out;
  for (std::size_t k = 0; k < a.series.size(); ++k) {
    const TimePointStats& x = a.series[k];
    const TimePointStats& y = b.series[k];
    if (x.count == 0 || y.count == 0 || records[k] == 0) continue;
    const long rk_steps = std::max<long>(200, long(std::ceil(x.time * 200)));
    const Matrix ref = evolve_mean(rho0, ls, x.time, rk_steps).states.back().matrix();
    const Matrix euler = euler_mean(rho0, ls, spec.dt, records[k]);
    for (Index i = 0; i < spec.dim; ++i) {
      for (Index j = 0; j < spec.dim; ++j) {
        const double d_re = std::abs(x.rho(i, j).real() - y.rho(i, j).real());
        const double d_im = std::abs(x.rho(i, j).imag() - y.rho(i, j).imag());
        const double a_re = 4.0 * std::hypot(x.rho_se_re(i, j), y.rho_se_re(i, j)) +
                            std::abs(euler(i, j).real() - ref(i, j).real()) + 1e-12;
        const double a_im = 4.0 * std::hypot(x.rho_se_im(i, j), y.rho_se_im(i, j)) +
                            std::abs(euler(i, j).imag() - ref(i, j).imag()) + 1e-12;
        for (auto [d, allow] : {std::pair{d_re, a_re}, std::pair{d_im, a_im}}) {
          if (d > out.distance) {
            out.distance = d;
            out.allowance = allow;
          }
          out.worst_ratio = std::max(out.worst_ratio, d / allow);
        }
      }
    }
  }
  out.within = out.worst_ratio <= 1.0;
  return out;
}

std::vector<double> pathwise_distances(const ExperimentSpec& spec, long trajectories) {
  const LindbladSet ls = lindblad_set(spec);
  const StateVector psi0 = initial_state_vector(spec);
  DensityOptions dopts;
  dopts.reject = density_reject_threshold(ls, spec.dt);
  const long n_steps = spec.steps();
  std::vector<double> out;
  for (long i = 0; i < trajectories; ++i) {
    NoiseStream stream(spec.seed, std::uint64_t(i));
    StateVector psi = psi0;
    DensityMatrix rho = DensityMatrix::pure(psi0);
    double worst = 0;
    for (long s = 0; s < n_steps; ++s) {
      const NoiseIncrements dxi = sample_increments(stream, ls.size(), spec.dt);
      psi = step_state_vector(psi, ls, dxi, spec.dt);
      rho = step_density_nonlinear(rho, ls, dxi, spec.dt, dopts);
      worst = std::max(worst, (rho.matrix() - psi.projector()).norm());
    }
    out.push_back(worst);
  }
  return out;
}

double pathwise_distance(const ExperimentSpec& spec, long trajectories) {
  double worst = 0;
  for (double d : pathwise_distances(spec, trajectories)) worst = std::max(worst, d);
  return worst;
}

}  // namespace qdiff
