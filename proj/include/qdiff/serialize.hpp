#pragma once

// JSON encodings. Matrices and vectors use {"dim": n, "re": [...], "im": [...]}
// with row-major nested arrays for matrices and flat arrays for vectors.

#include <string>

#include <json.hpp>

#include "qdiff/analysis.hpp"

namespace qdiff {

using json = nlohmann::json;

json matrix_to_json(const Matrix& m);
/// Throws InvalidArgument on malformed input.
Matrix matrix_from_json(const json& j);

json vector_to_json(const Vector& v);
Vector vector_from_json(const json& j);

json spec_to_json(const ExperimentSpec& spec);
/// Parses the "experiment" object of a config. Throws SpecError with the
/// field path on missing or ill-typed fields; semantic checks are left to
/// validate().
ExperimentSpec spec_from_json(const json& j);

json born_to_json(const BornReport& r);
json martingale_to_json(const MartingaleReport& r);

/// Shortest round-trip decimal representation of `x`.
std::string format_double(double x);

}  // namespace qdiff
