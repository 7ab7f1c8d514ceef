#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qdiff/serialize.hpp"

namespace qdiff::cli {

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kParse = 2;
inline constexpr int kSemantic = 3;
inline constexpr int kTrajectoryFailure = 4;
inline constexpr int kIo = 5;
}  // namespace exit_code

/// Config problem with the exit code it maps to.
class ConfigError : public QdiffError {
 public:
  ConfigError(int code, const std::string& what) : QdiffError(what), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

/// Column selector for series.csv: p[m], re[m,n], im[m,n], expect, weight.
struct Selector {
  enum class Kind { Diagonal, Real, Imag, Expect, Weight };
  Kind kind = Kind::Diagonal;
  Index m = 0;
  Index n = 0;
  std::string name;
};

Selector parse_selector(const std::string& text);

struct RunConfig {
  ExperimentSpec experiment;
  std::vector<Engine> engines;
  std::string output_dir = "qdiff_out";
  bool write_json = true;
  bool write_csv = true;
  bool bit_exact = false;
  /// 0 means AUTO.
  int workers = 0;
  std::vector<Selector> tracked;
  /// Shared-noise trajectories for the STATE_VECTOR vs DENSITY_NONLINEAR
  /// pathwise check in compare.
  long pathwise_trajectories = 8;

  /// Config with defaults filled in; also the input of the config hash.
  json normalized() const;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool bit_exact = false;
  std::optional<std::string> output_dir;
};

/// Throws ConfigError (kParse for malformed JSON or wrong schema shape,
/// kSemantic for invalid values).
RunConfig parse_config(const json& j);
RunConfig load_config(const std::string& path);
void apply(RunConfig& config, const Overrides& o);

/// FNV-1a 64 of the normalized config dump, as 16 hex digits.
std::string config_hash(const RunConfig& config);

int cmd_validate(const std::string& path, const Overrides& o, std::ostream& out, std::ostream& err);
int cmd_run(const std::string& path, const Overrides& o, std::ostream& out, std::ostream& err);
int cmd_compare(const std::string& path, const Overrides& o, std::ostream& out, std::ostream& err);

/// Per-engine summary block written to summary.json.
json engine_summary(const EnsembleResult& r);

/// series.csv body for the given ensembles (one per engine, same spec grid).
std::string series_csv(const std::vector<EnsembleResult>& results, const std::vector<Selector>& tracked);

/// Writes `content` to a temporary file next to `path` and renames it.
void write_atomic(const std::string& path, const std::string& content);

}  // namespace qdiff::cli
