#include "qdiff/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <regex>
#include <sstream>

namespace qdiff::cli {

namespace fs = std::filesystem;

Selector parse_selector(const std::string& text) {
  static const std::regex diag(R"(p\[(\d+)\])");
  static const std::regex elem(R"((re|im)\[(\d+),(\d+)\])");
  std::smatch m;
  Selector s;
  s.name = text;
  if (std::regex_match(text, m, diag)) {
    s.kind = Selector::Kind::Diagonal;
    s.m = s.n = std::stol(m[1]);
  } else if (std::regex_match(text, m, elem)) {
    s.kind = m[1] == "re" ? Selector::Kind::Real : Selector::Kind::Imag;
    s.m = std::stol(m[2]);
    s.n = std::stol(m[3]);
  } else if (text == "expect") {
    s.kind = Selector::Kind::Expect;
  } else if (text == "weight") {
    s.kind = Selector::Kind::Weight;
  } else {
    throw InvalidArgument("unknown selector '" + text + "' (use p[m], re[m,n], im[m,n], expect, weight)");
  }
  return s;
}

namespace {

std::vector<Selector> default_selectors(const ExperimentSpec& spec, const std::vector<Engine>& engines) {
  std::vector<Selector> out;
  for (Index m = 0; m < spec.dim; ++m) out.push_back(parse_selector("p[" + std::to_string(m) + "]"));
  for (Index m = 0; m < spec.dim; ++m) {
    for (Index n = m + 1; n < spec.dim; ++n) {
      const std::string idx = std::to_string(m) + "," + std::to_string(n) + "]";
      out.push_back(parse_selector("re[" + idx));
      out.push_back(parse_selector("im[" + idx));
    }
  }
  for (Engine e : engines) {
    if (e == Engine::LinearWeighted) {
      out.push_back(parse_selector("weight"));
      break;
    }
  }
  return out;
}

ConfigError semantic(const std::string& field, const std::string& what) {
  return ConfigError(exit_code::kSemantic, field + ": " + what);
}

}  // namespace

RunConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError(exit_code::kParse, "config must be a JSON object");
  if (!j.contains("schema")) throw semantic("schema", "missing (expected 1)");
  if (!j["schema"].is_number_integer() || j["schema"].get<long>() != 1) {
    throw semantic("schema", "unsupported schema version (expected 1)");
  }
  if (!j.contains("experiment")) throw semantic("experiment", "missing");

  RunConfig cfg;
  try {
    cfg.experiment = spec_from_json(j["experiment"]);
  } catch (const SpecError& e) {
    throw semantic("experiment." + e.field(), std::string(e.what()).substr(e.field().size() + 2));
  }

  if (j.contains("engines")) {
    const json& e = j["engines"];
    if (!e.is_array() || e.empty()) throw semantic("engines", "expected a non-empty array of engine names");
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (!e[i].is_string()) throw semantic("engines[" + std::to_string(i) + "]", "expected a string");
      try {
        cfg.engines.push_back(engine_from_string(e[i].get<std::string>()));
      } catch (const SpecError& err) {
        throw semantic("engines[" + std::to_string(i) + "]", err.what());
      }
    }
    cfg.experiment.engine = cfg.engines.front();
  } else {
    cfg.engines = {cfg.experiment.engine};
  }

  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string()) throw semantic("output_dir", "expected a string");
    cfg.output_dir = j["output_dir"].get<std::string>();
  }
  if (j.contains("formats")) {
    const json& f = j["formats"];
    if (!f.is_array()) throw semantic("formats", "expected an array");
    cfg.write_json = cfg.write_csv = false;
    for (const auto& x : f) {
      if (x == "json") {
        cfg.write_json = true;
      } else if (x == "csv") {
        cfg.write_csv = true;
      } else {
        throw semantic("formats", "allowed values are \"json\" and \"csv\"");
      }
    }
  }
  if (j.contains("bit_exact")) {
    if (!j["bit_exact"].is_boolean()) throw semantic("bit_exact", "expected a boolean");
    cfg.bit_exact = j["bit_exact"].get<bool>();
  }
  if (j.contains("workers")) {
    const json& w = j["workers"];
    if (w.is_string() && w.get<std::string>() == "AUTO") {
      cfg.workers = 0;
    } else if (w.is_number_integer() && w.get<long>() >= 1) {
      cfg.workers = int(w.get<long>());
    } else {
      throw semantic("workers", "expected a positive integer or \"AUTO\"");
    }
  }
  if (j.contains("pathwise_trajectories")) {
    const json& p = j["pathwise_trajectories"];
    if (!p.is_number_integer() || p.get<long>() < 1) throw semantic("pathwise_trajectories", "expected an integer >= 1");
    cfg.pathwise_trajectories = p.get<long>();
  }

  const ExperimentSpec& spec = cfg.experiment;
  if (j.contains("tracked")) {
    const json& t = j["tracked"];
    if (!t.is_array()) throw semantic("tracked", "expected an array of selectors");
    for (std::size_t i = 0; i < t.size(); ++i) {
      const std::string path = "tracked[" + std::to_string(i) + "]";
      if (!t[i].is_string()) throw semantic(path, "expected a string");
      Selector s;
      try {
        s = parse_selector(t[i].get<std::string>());
      } catch (const InvalidArgument& e) {
        throw semantic(path, e.what());
      }
      if (s.m >= spec.dim || s.n >= spec.dim) throw semantic(path, "index outside dim");
      if (s.kind == Selector::Kind::Expect && spec.mode != LindbladMode::SingleObservable) {
        throw semantic(path, "expect is defined for SINGLE_OBSERVABLE mode only");
      }
      cfg.tracked.push_back(s);
    }
  } else {
    cfg.tracked = default_selectors(spec, cfg.engines);
  }

  for (std::size_t i = 0; i < cfg.engines.size(); ++i) {
    ExperimentSpec s = spec;
    s.engine = cfg.engines[i];
    try {
      validate(s);
    } catch (const SpecError& e) {
      throw semantic("experiment." + e.field(), std::string(e.what()).substr(e.field().size() + 2));
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(exit_code::kParse, "cannot read config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(exit_code::kParse, std::string("JSON parse error: ") + e.what());
  }
  return parse_config(j);
}

void apply(RunConfig& config, const Overrides& o) {
  if (o.seed) config.experiment.seed = *o.seed;
  if (o.workers) config.workers = *o.workers;
  if (o.bit_exact) config.bit_exact = true;
  if (o.output_dir) config.output_dir = *o.output_dir;
}

json RunConfig::normalized() const {
  json j;
  j["schema"] = 1;
  j["experiment"] = spec_to_json(experiment);
  json engines_json = json::array();
  for (Engine e : engines) engines_json.push_back(to_string(e));
  j["engines"] = std::move(engines_json);
  j["output_dir"] = output_dir;
  json formats = json::array();
  if (write_json) formats.push_back("json");
  if (write_csv) formats.push_back("csv");
  j["formats"] = std::move(formats);
  j["bit_exact"] = bit_exact;
  j["workers"] = workers == 0 ? json("AUTO") : json(workers);
  json tracked_json = json::array();
  for (const auto& s : tracked) tracked_json.push_back(s.name);
  j["tracked"] = std::move(tracked_json);
  j["pathwise_trajectories"] = pathwise_trajectories;
  return j;
}

std::string config_hash(const RunConfig& config) {
  json j = config.normalized();
  // Execution-only settings do not change results.
  j.erase("workers");
  j.erase("output_dir");
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp + "'");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("cannot rename to '" + path + "': " + ec.message());
}

json engine_summary(const EnsembleResult& r) {
  const ExperimentSpec& spec = r.spec;
  json j;
  j["engine"] = to_string(spec.engine);
  j["trajectories"] = spec.trajectories;

  const BornReport born = estimate_born_frequencies(r.outcomes, DensityMatrix(spec.initial));
  j["born"] = born_to_json(born);

  long resolved = 0, product = 0;
  double hit_sum = 0;
  for (const auto& o : r.outcomes) {
    if (o.status == TrajectoryStatus::Failed || !o.endpoint) continue;
    ++resolved;
    hit_sum += *o.hitting_time;
    product += o.final_max_offdiagonal < spec.epsilon_offdiag;
  }
  j["endpoints"] = {{"resolved", resolved},
                    {"mean_hitting_time", resolved ? json(hit_sum / double(resolved)) : json()},
                    {"product_state_fraction", resolved ? json(double(product) / double(resolved)) : json()}};

  json deco = json::array();
  for (Index m = 0; m < spec.dim; ++m) {
    for (Index n = m + 1; n < spec.dim; ++n) {
      if (std::abs(spec.initial(m, n)) < 1e-12) continue;
      json entry = {{"m", m}, {"n", n}};
      if (auto rate = expected_decoherence_rate(spec, m, n)) entry["expected_rate"] = *rate;
      try {
        const DecoherenceFit fit = fit_decoherence_rate(offdiagonal_series(r, m, n));
        entry["fitted_rate"] = fit.rate;
        entry["se"] = fit.se;
        entry["points"] = fit.points;
        entry["t_begin"] = fit.t_begin;
        entry["t_end"] = fit.t_end;
      } catch (const InvalidArgument& e) {
        entry["error"] = e.what();
      }
      deco.push_back(std::move(entry));
    }
  }
  j["decoherence"] = std::move(deco);
  j["martingale"] = martingale_to_json(check_martingale(diagonal_series(r)));

  json neff = json::array();
  bool monotone = true;
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& tp : r.series) {
    neff.push_back(tp.neff);
    if (tp.neff > prev * (1 + 1e-12)) monotone = false;
    prev = tp.neff;
  }
  const TimePointStats& last = r.series.back();
  j["weights"] = {{"mean_final", last.weight_mean},
                  {"se_final", last.weight_se},
                  {"variance_final", last.weight_variance},
                  {"effective_sample_size", last.neff},
                  {"neff_series", std::move(neff)},
                  {"neff_nonincreasing", monotone}};

  const MeanStateDistance d = mean_state_vs_reference(r, false);
  j["mean_state_vs_reference"] = {{"distance", d.distance}, {"allowance", d.allowance},
                                  {"worst_ratio", d.worst_ratio}, {"within", d.within}};
  if (spec.engine == Engine::LinearWeighted) {
    const MeanStateDistance raw = mean_state_vs_reference(r, true);
    j["unweighted_R_vs_reference"] = {{"distance", raw.distance}, {"allowance", raw.allowance},
                                      {"worst_ratio", raw.worst_ratio}, {"within", raw.within}};
  }
  json failures = json::array();
  for (const auto& o : r.outcomes) {
    if (o.status == TrajectoryStatus::Failed) failures.push_back({{"index", o.trajectory_index}, {"message", o.message}});
  }
  j["failures"] = std::move(failures);
  j["warnings"] = r.warnings;
  return j;
}

std::string series_csv(const std::vector<EnsembleResult>& results, const std::vector<Selector>& tracked) {
  std::ostringstream out;
  out << "t";
  const bool prefix = results.size() > 1;
  for (const auto& r : results) {
    for (const auto& s : tracked) {
      const std::string name = prefix ? to_string(r.spec.engine) + "." + s.name : s.name;
      out << ',' << name << ',' << name << "_se";
    }
  }
  out << '\n';
  const std::size_t rows = results.front().series.size();
  for (std::size_t k = 0; k < rows; ++k) {
    out << format_double(results.front().series[k].time);
    for (const auto& r : results) {
      const TimePointStats& tp = r.series[k];
      for (const auto& s : tracked) {
        if (tp.count == 0) {
          out << ",,";
          continue;
        }
        double value = 0, se = 0;
        switch (s.kind) {
          case Selector::Kind::Diagonal:
          case Selector::Kind::Real:
            value = tp.rho(s.m, s.n).real();
            se = tp.rho_se_re(s.m, s.n);
            break;
          case Selector::Kind::Imag:
            value = tp.rho(s.m, s.n).imag();
            se = tp.rho_se_im(s.m, s.n);
            break;
          case Selector::Kind::Expect:
            value = tp.expect.empty() ? 0.0 : tp.expect.front().real();
            se = tp.expect_se.empty() ? 0.0 : tp.expect_se.front();
            break;
          case Selector::Kind::Weight:
            value = tp.weight_mean;
            se = tp.weight_se;
            break;
        }
        out << ',' << format_double(value) << ',' << format_double(se);
      }
    }
    out << '\n';
  }
  return out.str();
}

namespace {

struct Loaded {
  RunConfig config;
  int code = exit_code::kOk;
};

Loaded load(const std::string& path, const Overrides& o, std::ostream& err) {
  Loaded l;
  try {
    l.config = load_config(path);
    apply(l.config, o);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    l.code = e.code();
  }
  return l;
}

void prepare_output(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir + "': " + ec.message());
  const std::string probe = (fs::path(dir) / ".qdiff_write_probe").string();
  write_atomic(probe, "");
  fs::remove(probe, ec);
}

std::vector<EnsembleResult> run_all(const RunConfig& cfg, std::ostream& out) {
  EnsembleOptions opts;
  opts.workers = cfg.workers;
  opts.bit_exact = cfg.bit_exact;
  for (const auto& s : cfg.tracked) {
    if (s.kind == Selector::Kind::Expect) {
      Matrix l = Matrix::Zero(cfg.experiment.dim, cfg.experiment.dim);
      for (Index i = 0; i < cfg.experiment.dim; ++i) l(i, i) = cfg.experiment.eigenvalues[std::size_t(i)];
      opts.expectations.push_back(l);
      break;
    }
  }
  std::vector<EnsembleResult> results;
  for (Engine e : cfg.engines) {
    ExperimentSpec spec = cfg.experiment;
    spec.engine = e;
    out << "running " << to_string(e) << ": " << spec.trajectories << " trajectories, " << spec.steps()
        << " steps of dt = " << spec.dt << '\n';
    results.push_back(run_ensemble(spec, opts));
  }
  return results;
}

json pairwise_comparisons(const std::vector<EnsembleResult>& results) {
  json out = json::array();
  for (std::size_t a = 0; a < results.size(); ++a) {
    for (std::size_t b = a + 1; b < results.size(); ++b) {
      const DensityMatrix init(results[a].spec.initial);
      const BornReport ba = estimate_born_frequencies(results[a].outcomes, init);
      const BornReport bb = estimate_born_frequencies(results[b].outcomes, init);
      const std::vector<double> z = compare_frequencies(ba.assigned, bb.assigned);
      double worst = 0;
      for (double x : z) worst = std::max(worst, std::abs(x));
      const MeanStateDistance d = compare_mean_states(results[a], results[b]);
      out.push_back({{"a", to_string(results[a].spec.engine)},
                     {"b", to_string(results[b].spec.engine)},
                     {"born_z", z},
                     {"max_abs_z", worst},
                     {"mean_state_distance", {{"distance", d.distance}, {"allowance", d.allowance},
                                              {"worst_ratio", d.worst_ratio}, {"within", d.within}}}});
    }
  }
  return out;
}

json manifest(const RunConfig& cfg, const std::vector<std::string>& files) {
  return {{"schema", 1},
          {"config_hash", "fnv1a64:" + config_hash(cfg)},
          {"seed", cfg.experiment.seed},
          {"bit_exact", cfg.bit_exact},
          {"files", files},
          {"versions",
           {{"qdiff", QDIFF_VERSION},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"compiler", __VERSION__}}},
          {"config", cfg.normalized()}};
}

bool any_failed(const std::vector<EnsembleResult>& results) {
  for (const auto& r : results) {
    if (!r.ok()) return true;
  }
  return false;
}

}  // namespace

int cmd_validate(const std::string& path, const Overrides& o, std::ostream& out, std::ostream& err) {
  Loaded l = load(path, o, err);
  if (l.code != exit_code::kOk) return l.code;
  out << l.config.normalized().dump(2) << '\n';
  return exit_code::kOk;
}

int cmd_run(const std::string& path, const Overrides& o, std::ostream& out, std::ostream& err) {
  Loaded l = load(path, o, err);
  if (l.code != exit_code::kOk) return l.code;
  const RunConfig& cfg = l.config;
  try {
    prepare_output(cfg.output_dir);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::kIo;
  }
  const std::vector<EnsembleResult> results = run_all(cfg, out);

  json summary;
  summary["schema"] = 1;
  summary["engines"] = json::object();
  for (const auto& r : results) summary["engines"][to_string(r.spec.engine)] = engine_summary(r);
  if (results.size() > 1) summary["comparisons"] = pairwise_comparisons(results);

  std::vector<std::string> files;
  try {
    const fs::path dir(cfg.output_dir);
    if (cfg.write_json) {
      write_atomic((dir / "summary.json").string(), summary.dump(2) + "\n");
      files.push_back("summary.json");
    }
    if (cfg.write_csv) {
      write_atomic((dir / "series.csv").string(), series_csv(results, cfg.tracked));
      files.push_back("series.csv");
    }
    write_atomic((dir / "manifest.json").string(), manifest(cfg, files).dump(2) + "\n");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::kIo;
  }
  for (const auto& r : results) {
    for (const auto& w : r.warnings) out << "warning [" << to_string(r.spec.engine) << "]: " << w << '\n';
  }
  if (any_failed(results)) {
    for (const auto& r : results) {
      for (long i : r.failed) err << "trajectory " << i << " failed (" << to_string(r.spec.engine) << ")\n";
    }
    return exit_code::kTrajectoryFailure;
  }
  out << "wrote " << cfg.output_dir << '\n';
  return exit_code::kOk;
}

int cmd_compare(const std::string& path, const Overrides& o, std::ostream& out, std::ostream& err) {
  Loaded l = load(path, o, err);
  if (l.code != exit_code::kOk) return l.code;
  const RunConfig& cfg = l.config;
  if (cfg.engines.size() < 2) {
    err << "error: engines: compare needs at least two engines\n";
    return exit_code::kSemantic;
  }
  try {
    prepare_output(cfg.output_dir);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::kIo;
  }
  const std::vector<EnsembleResult> results = run_all(cfg, out);

  json report;
  report["schema"] = 1;
  json engines = json::array();
  for (const auto& r : results) engines.push_back(to_string(r.spec.engine));
  report["engines"] = std::move(engines);
  for (const auto& r : results) {
    const std::string name = to_string(r.spec.engine);
    const json s = engine_summary(r);
    report["born"][name] = s["born"];
    report["mean_state_vs_reference"][name] = s["mean_state_vs_reference"];
    report["weights"][name] = s["weights"];
  }
  report["pairs"] = pairwise_comparisons(results);

  bool has_sv = false, has_dn = false;
  for (Engine e : cfg.engines) {
    has_sv |= e == Engine::StateVector;
    has_dn |= e == Engine::DensityNonlinear;
  }
  report["pathwise"] = nullptr;
  if (has_sv && has_dn) {
    ExperimentSpec spec = cfg.experiment;
    spec.engine = Engine::StateVector;
    const long n = std::min(cfg.pathwise_trajectories, spec.trajectories);
    try {
      report["pathwise"] = {{"trajectories", n}, {"max_distance", pathwise_distance(spec, n)}};
    } catch (const QdiffError& e) {
      report["pathwise"] = {{"trajectories", n}, {"error", e.what()}};
    }
  }

  std::vector<std::string> files;
  try {
    const fs::path dir(cfg.output_dir);
    write_atomic((dir / "comparison.json").string(), report.dump(2) + "\n");
    files.push_back("comparison.json");
    if (cfg.write_csv) {
      write_atomic((dir / "series.csv").string(), series_csv(results, cfg.tracked));
      files.push_back("series.csv");
    }
    write_atomic((dir / "manifest.json").string(), manifest(cfg, files).dump(2) + "\n");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::kIo;
  }
  for (const auto& pair : report["pairs"]) {
    out << pair["a"].get<std::string>() << " vs " << pair["b"].get<std::string>()
        << ": max |z| = " << pair["max_abs_z"].dump()
        << ", mean-state distance = " << pair["mean_state_distance"]["distance"].dump() << '\n';
  }
  if (any_failed(results)) return exit_code::kTrajectoryFailure;
  return exit_code::kOk;
}

}  // namespace qdiff::cli
