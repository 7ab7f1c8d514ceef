#include "qdiff/experiment.hpp"

#include <algorithm>
#include <cmath>

namespace qdiff {

std::string to_string(Engine e) {
  switch (e) {
    case Engine::StateVector: return "STATE_VECTOR";
    case Engine::DensityNonlinear: return "DENSITY_NONLINEAR";
    case Engine::LinearWeighted: return "LINEAR_WEIGHTED";
  }
  return "?";
}

std::string to_string(LindbladMode m) {
  return m == LindbladMode::SingleObservable ? "SINGLE_OBSERVABLE" : "PROJECTORS";
}

Engine engine_from_string(const std::string& s) {
  if (s == "STATE_VECTOR") return Engine::StateVector;
  if (s == "DENSITY_NONLINEAR") return Engine::DensityNonlinear;
  if (s == "LINEAR_WEIGHTED") return Engine::LinearWeighted;
  throw SpecError("engine", "unknown engine '" + s + "'");
}

LindbladMode lindblad_mode_from_string(const std::string& s) {
  if (s == "SINGLE_OBSERVABLE") return LindbladMode::SingleObservable;
  if (s == "PROJECTORS") return LindbladMode::Projectors;
  throw SpecError("lindblad_mode", "unknown mode '" + s + "'");
}

long ExperimentSpec::steps() const { return std::lround(t_max / dt); }

std::vector<long> ExperimentSpec::record_steps() const {
  const long n = steps();
  const int points = std::max(2, series_points);
  std::vector<long> out;
  out.reserve(std::size_t(points));
  for (int k = 0; k < points; ++k) {
    const long s = std::lround(double(k) * double(n) / double(points - 1));
    if (out.empty() || s > out.back()) out.push_back(s);
  }
  return out;
}

LindbladSet lindblad_set(const ExperimentSpec& spec) {
  if (spec.mode == LindbladMode::Projectors) return build_projector_set<double>(spec.dim);
  return build_observable<double>(spec.eigenvalues);
}

namespace {

std::optional<Vector> pure_amplitudes(const Matrix& rho) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(rho);
  const Index top = rho.rows() - 1;
  if (es.eigenvalues()(top) < 1.0 - 1e-10) return std::nullopt;
  Vector v = es.eigenvectors().col(top);
  // Fix the global phase so the largest amplitude is real and positive.
  Index big = 0;
  v.cwiseAbs().maxCoeff(&big);
  v *= std::abs(v(big)) / v(big);
  return v / v.norm();
}

}  // namespace

StateVector initial_state_vector(const ExperimentSpec& spec) {
  if (spec.initial_vector) return StateVector(*spec.initial_vector);
  auto v = pure_amplitudes(spec.initial);
  if (!v) throw SpecError("initial_state", "STATE_VECTOR engine requires a pure initial state");
  return StateVector(*v);
}

void validate(const ExperimentSpec& spec) {
  if (spec.dim < 1 || spec.dim > kMaxDim) {
    throw SpecError("dim", "must be between 1 and " + std::to_string(kMaxDim));
  }
  if (spec.mode == LindbladMode::Projectors && spec.dim < 2) {
    throw SpecError("dim", "PROJECTORS mode needs dim >= 2");
  }
  if (spec.mode == LindbladMode::SingleObservable) {
    if (spec.eigenvalues.empty()) throw SpecError("observable", "empty eigenvalue list");
    if (Index(spec.eigenvalues.size()) != spec.dim) {
      throw SpecError("observable", "dimension does not match dim");
    }
    for (double l : spec.eigenvalues) {
      if (!std::isfinite(l)) throw SpecError("observable", "non-finite eigenvalue");
    }
  }
  if (spec.initial.rows() != spec.dim || spec.initial.cols() != spec.dim) {
    throw SpecError("initial_state", "dimension does not match dim");
  }
  try {
    DensityMatrix check(spec.initial);
  } catch (const InvalidArgument& e) {
    throw SpecError("initial_state", e.what());
  }
  if (spec.initial_vector) {
    const auto& v = *spec.initial_vector;
    if (v.size() != spec.dim) throw SpecError("initial_state", "vector dimension does not match dim");
    if (std::abs(v.squaredNorm() - 1.0) > kTolNorm) {
      throw SpecError("initial_state", "vector must be normalized");
    }
  }
  if (!(spec.dt > 0) || !std::isfinite(spec.dt)) throw SpecError("dt", "must be positive and finite");
  if (!(spec.t_max > 0) || !std::isfinite(spec.t_max)) {
    throw SpecError("t_max", "must be positive and finite");
  }
  const double ratio = spec.t_max / spec.dt;
  if (std::lround(ratio) < 1 || std::abs(ratio - double(std::lround(ratio))) > 1e-6 * ratio) {
    throw SpecError("t_max", "t_max/dt must be an integer >= 1");
  }
  if (spec.trajectories < 1) throw SpecError("trajectories", "must be >= 1");
  if (!(spec.epsilon_endpoint > 0 && spec.epsilon_endpoint < 0.5)) {
    throw SpecError("epsilon_endpoint", "must lie in (0, 0.5)");
  }
  if (!(spec.epsilon_offdiag > 0)) throw SpecError("epsilon_offdiag", "must be positive");
  if (spec.series_points < 2) throw SpecError("series_points", "must be >= 2");
  if (spec.engine == Engine::StateVector) initial_state_vector(spec);
  try {
    check_step_size(lindblad_set(spec), spec.dt);
  } catch (const StepFailure& e) {
    throw SpecError("dt", e.what());
  }
}

double density_reject_threshold(const LindbladSet& ls, double dt) {
  return std::clamp(10.0 * std::sqrt(dt * ls.max_norm_squared()), kTolPsd, 0.5);
}

TrajectoryPlan::TrajectoryPlan(const ExperimentSpec& s) : TrajectoryPlan(s, lindblad_set(s)) {}

TrajectoryPlan::TrajectoryPlan(const ExperimentSpec& s, LindbladSet l)
    : spec(s), ls(std::move(l)), records(s.record_steps()) {
  if (spec.engine == Engine::StateVector) psi0 = initial_state_vector(spec);
  density.reject = density_reject_threshold(ls, spec.dt);
}

MeasurementOutcome run_measurement_trajectory(const ExperimentSpec& spec, long trajectory_index,
                                              const TrajectoryObserver& observer) {
  return run_measurement_trajectory(TrajectoryPlan(spec), trajectory_index, observer);
}

MeasurementOutcome run_measurement_trajectory(const ExperimentSpec& spec, const LindbladSet& ls,
                                              long trajectory_index,
                                              const TrajectoryObserver& observer) {
  return run_measurement_trajectory(TrajectoryPlan(spec, ls), trajectory_index, observer);
}

MeasurementOutcome run_measurement_trajectory(const TrajectoryPlan& plan, long trajectory_index,
                                              const TrajectoryObserver& observer) {
  const ExperimentSpec& spec = plan.spec;
  const LindbladSet& ls = plan.ls;
  MeasurementOutcome out;
  out.trajectory_index = trajectory_index;
  out.engine = spec.engine;

  const long n_steps = spec.steps();
  const std::vector<long>& records = plan.records;
  std::size_t next_record = 0;
  const double threshold = 1.0 - spec.epsilon_endpoint;
  const std::size_t m_count = ls.size();

  NoiseStream stream(spec.seed, std::uint64_t(trajectory_index));
  const DensityOptions& dopts = plan.density;

  // Current normalized state, raw state and weight.
  Matrix rho = spec.initial;
  Matrix raw = spec.initial;
  double weight = 1.0;
  std::optional<StateVector> psi;
  std::optional<DensityMatrix> dens;
  std::optional<UnnormalizedState> lin;
  switch (spec.engine) {
    case Engine::StateVector:
      psi = *plan.psi0;
      rho = psi->projector();
      raw = rho;
      break;
    case Engine::DensityNonlinear:
      dens = DensityMatrix::unchecked(spec.initial);
      break;
    case Engine::LinearWeighted:
      lin = UnnormalizedState{spec.initial, spec.initial.trace().real()};
      break;
  }

  auto emit_records = [&](long step) {
    while (next_record < records.size() && records[next_record] <= step) {
      if (observer.on_record) {
        observer.on_record(next_record,
                           Snapshot{double(records[next_record]) * spec.dt, rho, raw, weight});
      }
      ++next_record;
    }
  };
  auto check_endpoint = [&](long step) {
    Index peak_index = 0;
    const double peak = rho.diagonal().real().maxCoeff(&peak_index);
    if (!out.endpoint) {
      if (peak >= threshold) {
        out.endpoint = int(peak_index);
        out.hitting_time = double(step) * spec.dt;
      }
    } else {
      const double p = rho(*out.endpoint, *out.endpoint).real();
      out.post_hit_min_peak = std::min(out.post_hit_min_peak.value_or(p), p);
    }
  };

  check_endpoint(0);
  emit_records(0);
  bool stopped = out.endpoint && spec.stop_at_endpoint;
  long step = 0;
  try {
    while (!stopped && step < n_steps) {
      const NoiseIncrements dxi = sample_increments(stream, m_count, spec.dt);
      ++step;
      switch (spec.engine) {
        case Engine::StateVector:
          psi = step_state_vector(*psi, ls, dxi, spec.dt);
          rho.noalias() = psi->amplitudes() * psi->amplitudes().adjoint();
          raw = rho;
          break;
        case Engine::DensityNonlinear:
          dens = step_density_nonlinear(*dens, ls, dxi, spec.dt, dopts);
          rho = dens->matrix();
          raw = rho;
          break;
        case Engine::LinearWeighted: {
          LinearStep next = step_linear(*lin, ls, dxi, spec.dt);
          if (next.dead) {
            out.status = TrajectoryStatus::Dead;
            out.message = "weight below " + std::to_string(kWeightFloor) + " at t = " +
                          std::to_string(double(step) * spec.dt);
            stopped = true;
            --step;
            continue;
          }
          lin = std::move(next.state);
          raw = lin->r;
          weight = lin->w;
          rho = raw / weight;
          break;
        }
      }
      if (observer.on_step) observer.on_step(step, Snapshot{double(step) * spec.dt, rho, raw, weight}, dxi);
      check_endpoint(step);
      emit_records(step);
      if (out.endpoint && spec.stop_at_endpoint) stopped = true;
    }
  } catch (const StepFailure& e) {
    throw TrajectoryFailure(trajectory_index, e.what());
  }
  emit_records(n_steps);

  out.final_diagonals.resize(std::size_t(rho.rows()));
  for (Index i = 0; i < rho.rows(); ++i) out.final_diagonals[std::size_t(i)] = rho(i, i).real();
  double off = 0;
  for (Index i = 0; i < rho.rows(); ++i) {
    for (Index j = 0; j < rho.cols(); ++j) {
      if (i != j) off = std::max(off, std::abs(rho(i, j)));
    }
  }
  out.final_max_offdiagonal = off;
  out.weight_final = weight;
  return out;
}

}  // namespace qdiff
