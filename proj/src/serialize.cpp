#include "qdiff/serialize.hpp"

#include <charconv>
#include <cmath>

namespace qdiff {

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

json matrix_to_json(const Matrix& m) {
  json re = json::array(), im = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row_re = json::array(), row_im = json::array();
    for (Index j = 0; j < m.cols(); ++j) {
      row_re.push_back(m(i, j).real());
      row_im.push_back(m(i, j).imag());
    }
    re.push_back(std::move(row_re));
    im.push_back(std::move(row_im));
  }
  return {{"dim", m.rows()}, {"re", std::move(re)}, {"im", std::move(im)}};
}

namespace {

double number_at(const json& j, const char* what) {
  if (!j.is_number()) throw InvalidArgument(std::string(what) + ": expected a number");
  return j.get<double>();
}

Index dim_of(const json& j) {
  if (!j.is_object() || !j.contains("dim")) throw InvalidArgument("expected an object with \"dim\"");
  if (!j["dim"].is_number_integer() || j["dim"].get<long>() < 1 || j["dim"].get<long>() > kMaxDim) {
    throw InvalidArgument("\"dim\" must be an integer in [1, " + std::to_string(kMaxDim) + "]");
  }
  return Index(j["dim"].get<long>());
}

}  // namespace

Matrix matrix_from_json(const json& j) {
  const Index n = dim_of(j);
  if (!j.contains("re")) throw InvalidArgument("matrix: missing \"re\"");
  const json& re = j["re"];
  const json im = j.contains("im") ? j["im"] : json();
  Matrix m = Matrix::Zero(n, n);
  auto fill = [&](const json& rows, bool imag) {
    if (!rows.is_array() || Index(rows.size()) != n) throw InvalidArgument("matrix: expected dim rows");
    for (Index i = 0; i < n; ++i) {
      const json& row = rows[std::size_t(i)];
      if (!row.is_array() || Index(row.size()) != n) throw InvalidArgument("matrix: expected dim columns");
      for (Index k = 0; k < n; ++k) {
        const double x = number_at(row[std::size_t(k)], "matrix entry");
        if (imag) {
          m(i, k).imag(x);
        } else {
          m(i, k).real(x);
        }
      }
    }
  };
  fill(re, false);
  if (!im.is_null()) fill(im, true);
  return m;
}

json vector_to_json(const Vector& v) {
  json re = json::array(), im = json::array();
  for (Index i = 0; i < v.size(); ++i) {
    re.push_back(v(i).real());
    im.push_back(v(i).imag());
  }
  return {{"dim", v.size()}, {"re", std::move(re)}, {"im", std::move(im)}};
}

Vector vector_from_json(const json& j) {
  const Index n = dim_of(j);
  Vector v = Vector::Zero(n);
  for (const char* part : {"re", "im"}) {
    if (!j.contains(part)) {
      if (std::string(part) == "re") throw InvalidArgument("vector: missing \"re\"");
      continue;
    }
    const json& a = j[part];
    if (!a.is_array() || Index(a.size()) != n) throw InvalidArgument("vector: expected dim entries");
    for (Index i = 0; i < n; ++i) {
      const double x = number_at(a[std::size_t(i)], "vector entry");
      if (part[0] == 'r') {
        v(i).real(x);
      } else {
        v(i).imag(x);
      }
    }
  }
  return v;
}

json spec_to_json(const ExperimentSpec& spec) {
  json j;
  j["engine"] = to_string(spec.engine);
  j["lindblad_mode"] = to_string(spec.mode);
  j["dim"] = spec.dim;
  if (spec.mode == LindbladMode::SingleObservable) j["eigenvalues"] = spec.eigenvalues;
  if (spec.initial_vector) {
    j["initial_state"] = {{"vector", vector_to_json(*spec.initial_vector)}};
  } else {
    j["initial_state"] = matrix_to_json(spec.initial);
  }
  j["dt"] = spec.dt;
  j["t_max"] = spec.t_max;
  j["trajectories"] = spec.trajectories;
  j["seed"] = spec.seed;
  j["epsilon_endpoint"] = spec.epsilon_endpoint;
  j["epsilon_offdiag"] = spec.epsilon_offdiag;
  j["stop_at_endpoint"] = spec.stop_at_endpoint;
  j["series_points"] = spec.series_points;
  return j;
}

namespace {

template <typename T>
T field(const json& j, const char* name, T fallback) {
  if (!j.contains(name)) return fallback;
  const json& v = j[name];
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw SpecError(name, "expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw SpecError(name, "expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw SpecError(name, "expected a number");
    } else {
      if (!v.is_string()) throw SpecError(name, "expected a string");
    }
    return v.get<T>();
  } catch (const json::exception& e) {
    throw SpecError(name, e.what());
  }
}

std::uint64_t seed_field(const json& j, std::uint64_t fallback) {
  if (!j.contains("seed")) return fallback;
  const json& v = j["seed"];
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0) return std::uint64_t(v.get<long long>());
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    std::uint64_t out = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    if (res.ec == std::errc() && res.ptr == s.data() + s.size() && !s.empty()) return out;
  }
  throw SpecError("seed", "expected a decimal unsigned 64-bit integer");
}

}  // namespace

ExperimentSpec spec_from_json(const json& j) {
  if (!j.is_object()) throw SpecError("experiment", "expected an object");
  ExperimentSpec spec;
  spec.engine = engine_from_string(field<std::string>(j, "engine", to_string(spec.engine)));
  spec.mode = lindblad_mode_from_string(field<std::string>(j, "lindblad_mode", to_string(spec.mode)));

  long dim = -1;
  if (j.contains("dim")) dim = field<long>(j, "dim", 2);

  if (spec.mode == LindbladMode::SingleObservable) {
    if (j.contains("observable")) {
      Matrix obs;
      try {
        obs = matrix_from_json(j["observable"]);
      } catch (const InvalidArgument& e) {
        throw SpecError("observable", e.what());
      }
      if (!is_hermitian(obs)) {
        throw SpecError("observable", "must be Hermitian (L = L†) for a measured observable");
      }
      const Matrix off = obs - Matrix(obs.diagonal().asDiagonal());
      if (off.cwiseAbs().maxCoeff() > kTolHermitian) {
        throw SpecError("observable", "must be diagonal in the computational basis");
      }
      spec.eigenvalues.clear();
      for (Index i = 0; i < obs.rows(); ++i) spec.eigenvalues.push_back(obs(i, i).real());
    } else if (j.contains("eigenvalues")) {
      const json& e = j["eigenvalues"];
      if (!e.is_array()) throw SpecError("eigenvalues", "expected an array of numbers");
      spec.eigenvalues.clear();
      for (const auto& x : e) {
        if (!x.is_number()) throw SpecError("eigenvalues", "expected an array of numbers");
        spec.eigenvalues.push_back(x.get<double>());
      }
    } else {
      throw SpecError("observable", "SINGLE_OBSERVABLE mode needs \"observable\" or \"eigenvalues\"");
    }
    if (dim < 0) dim = long(spec.eigenvalues.size());
  }

  if (!j.contains("initial_state")) throw SpecError("initial_state", "missing");
  const json& init = j["initial_state"];
  try {
    if (init.is_object() && init.contains("diagonal")) {
      const json& d = init["diagonal"];
      if (!d.is_array() || d.empty()) throw InvalidArgument("diagonal: expected a non-empty array");
      Matrix m = Matrix::Zero(Index(d.size()), Index(d.size()));
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (!d[i].is_number()) throw InvalidArgument("diagonal: expected numbers");
        m(Index(i), Index(i)) = d[i].get<double>();
      }
      spec.initial = m;
    } else if (init.is_object() && init.contains("vector")) {
      Vector v = vector_from_json(init["vector"]);
      const double n = v.norm();
      if (!(n > 0)) throw InvalidArgument("vector: zero norm");
      v /= n;
      spec.initial_vector = v;
      spec.initial = v * v.adjoint();
    } else {
      spec.initial = matrix_from_json(init);
    }
  } catch (const InvalidArgument& e) {
    throw SpecError("initial_state", e.what());
  }
  if (dim < 0) dim = long(spec.initial.rows());
  if (dim < 1 || dim > kMaxDim) throw SpecError("dim", "must be between 1 and " + std::to_string(kMaxDim));
  spec.dim = Index(dim);

  spec.dt = field<double>(j, "dt", spec.dt);
  spec.t_max = field<double>(j, "t_max", spec.t_max);
  spec.trajectories = field<long>(j, "trajectories", spec.trajectories);
  spec.seed = seed_field(j, spec.seed);
  spec.epsilon_endpoint = field<double>(j, "epsilon_endpoint", spec.epsilon_endpoint);
  spec.epsilon_offdiag = field<double>(j, "epsilon_offdiag", spec.epsilon_offdiag);
  spec.stop_at_endpoint = field<bool>(j, "stop_at_endpoint", spec.stop_at_endpoint);
  spec.series_points = field<int>(j, "series_points", spec.series_points);
  return spec;
}

json born_to_json(const BornReport& r) {
  return {{"expected", r.expected},
          {"frequencies", r.assigned.frequency},
          {"se", r.assigned.se},
          {"z", r.z},
          {"resolved_only", {{"frequencies", r.resolved_only.frequency}, {"se", r.resolved_only.se}}},
          {"assignment_gap_z", r.assignment_gap_z},
          {"resolved", r.resolved},
          {"unresolved", r.unresolved},
          {"dead", r.dead},
          {"failed", r.failed},
          {"weighted", r.weighted},
          {"effective_sample_size", r.effective_sample_size}};
}

json martingale_to_json(const MartingaleReport& r) {
  return {{"worst_z", r.worst_z},
          {"worst_index", r.worst_index},
          {"worst_time", r.worst_time},
          {"pass", r.pass}};
}

}  // namespace qdiff
