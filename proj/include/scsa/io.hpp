#pragma once

// On-disk formats: signal binaries with JSON headers, dataset directories,
// fit results, evaluation reports and CSV tables.

#include "scsa/estimators.hpp"
#include "scsa/evaluation.hpp"
#include "scsa/simulator.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace scsa {

using Json = nlohmann::ordered_json;

/// Writes `content` to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

/// <stem>.bin holds little-endian float64 samples in time-major order
/// (all channels of t = 1, then t = 2, ...); <stem>.json is the header.
void write_signals(const std::filesystem::path& stem, const TimeSeries& x);
TimeSeries read_signals(const std::filesystem::path& stem);

Json to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);
Json to_json(const MvarCoefficients& h);
MvarCoefficients mvar_from_json(const Json& j);
Json to_json(const SourceModel& m);
SourceModel source_model_from_json(const Json& j);
Json to_json(const SimulationSpec& s);
SimulationSpec simulation_spec_from_json(const Json& j);
Json to_json(const DatasetMetadata& m);
Json to_json(const FitRequest& r);
FitRequest fit_request_from_json(const Json& j);
Json to_json(const FitResult& r);
FitResult fit_result_from_json(const Json& j);
Json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const Json& j);

/// Directory with signals.bin/json, sources.bin/json, truth.json and metadata.json.
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

/// One header line plus rows; fields containing separators are quoted.
std::string to_csv(const std::vector<std::string>& header,
                   const std::vector<std::vector<std::string>>& rows);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace scsa
