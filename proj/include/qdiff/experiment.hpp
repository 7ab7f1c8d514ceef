#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qdiff/sde.hpp"

namespace qdiff {

enum class Engine { StateVector, DensityNonlinear, LinearWeighted };
enum class LindbladMode { SingleObservable, Projectors };

std::string to_string(Engine e);
std::string to_string(LindbladMode m);
Engine engine_from_string(const std::string& s);
LindbladMode lindblad_mode_from_string(const std::string& s);

/// Semantic error in an experiment description; `field` is a JSON-style path.
class SpecError : public QdiffError {
 public:
  SpecError(std::string field, const std::string& what)
      : QdiffError(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct ExperimentSpec {
  Engine engine = Engine::DensityNonlinear;
  LindbladMode mode = LindbladMode::SingleObservable;
  /// Spectrum of the measured observable (SINGLE_OBSERVABLE).
  std::vector<double> eigenvalues;
  /// Hilbert-space dimension; must match the observable and initial state.
  Index dim = 2;
  Matrix initial = Matrix::Identity(2, 2) / 2.0;
  /// Amplitudes for the state-vector engine. Derived from `initial` when it
  /// is pure and this is empty.
  std::optional<Vector> initial_vector;
  double dt = 1e-3;
  double t_max = 1.0;
  long trajectories = 1000;
  std::uint64_t seed = 1;
  double epsilon_endpoint = 1e-4;
  double epsilon_offdiag = 1e-3;
  bool stop_at_endpoint = true;
  /// Number of recorded time points including t = 0.
  int series_points = 21;

  long steps() const;
  /// Step indices at which the series is recorded.
  std::vector<long> record_steps() const;
};

/// Throws SpecError naming the offending field.
void validate(const ExperimentSpec& spec);

LindbladSet lindblad_set(const ExperimentSpec& spec);

/// Initial pure state for the state-vector engine; throws SpecError if the
/// initial density matrix is mixed.
StateVector initial_state_vector(const ExperimentSpec& spec);

enum class TrajectoryStatus { Ok, Dead, Failed };

struct MeasurementOutcome {
  long trajectory_index = 0;
  Engine engine = Engine::DensityNonlinear;
  std::optional<int> endpoint;
  std::optional<double> hitting_time;
  std::vector<double> final_diagonals;
  double weight_final = 1.0;
  /// max |ρ_mn|, m ≠ n, of the final normalized state.
  double final_max_offdiagonal = 0;
  /// Smallest peak diagonal seen after the hit when integration continues.
  std::optional<double> post_hit_min_peak;
  TrajectoryStatus status = TrajectoryStatus::Ok;
  std::string message;
};

/// State seen by observers: the normalized density matrix, the raw engine
/// state (R for the linear engine, ρ otherwise) and the weight.
struct Snapshot {
  double time;
  const Matrix& rho;
  const Matrix& raw;
  double weight;
};

struct TrajectoryObserver {
  /// Called once per recorded time point, including points after the
  /// trajectory has stopped (the frozen state is repeated).
  std::function<void(std::size_t record, const Snapshot&)> on_record;
  /// Called after every integration step with the increments consumed.
  std::function<void(long step, const Snapshot&, const NoiseIncrements&)> on_step;
};

/// A step failure carrying the trajectory it happened in.
class TrajectoryFailure : public QdiffError {
 public:
  TrajectoryFailure(long index, const std::string& what)
      : QdiffError("trajectory " + std::to_string(index) + ": " + what), index_(index) {}
  long index() const { return index_; }

 private:
  long index_;
};

/// Setup shared by every trajectory of one spec.
struct TrajectoryPlan {
  ExperimentSpec spec;
  LindbladSet ls;
  std::vector<long> records;
  /// Initial amplitudes, STATE_VECTOR only.
  std::optional<StateVector> psi0;
  DensityOptions density;

  explicit TrajectoryPlan(const ExperimentSpec& spec);
  TrajectoryPlan(const ExperimentSpec& spec, LindbladSet ls);
};

/// Integrates one trajectory of `spec` with noise stream (seed, index) up to
/// t_max, or until an endpoint is reached when stop_at_endpoint is set.
MeasurementOutcome run_measurement_trajectory(const ExperimentSpec& spec, long trajectory_index,
                                              const TrajectoryObserver& observer = {});

/// Same, reusing a prebuilt Lindblad set.
MeasurementOutcome run_measurement_trajectory(const ExperimentSpec& spec, const LindbladSet& ls,
                                              long trajectory_index,
                                              const TrajectoryObserver& observer = {});

MeasurementOutcome run_measurement_trajectory(const TrajectoryPlan& plan, long trajectory_index,
                                              const TrajectoryObserver& observer = {});

/// Eigenvalue threshold below which the density engine rejects a step.
double density_reject_threshold(const LindbladSet& ls, double dt);

}  // namespace qdiff
