#pragma once

// Command front end: simulate, fit, eval and bench, plus the batch runner.

#include "scsa/estimators.hpp"
#include "scsa/evaluation.hpp"
#include "scsa/simulator.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace scsa {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitIo = 3, kExitNumeric = 4, kExitEstimator = 5 };

/// Maps an exception to its failure class.
int exit_code_for(const std::exception& e);

/// "1..7", "1,2,4" or "3".
std::vector<std::size_t> parse_order_list(const std::string& text);
/// "auto" (empty result), a number, or a comma-separated list.
std::vector<double> parse_lambda_list(const std::string& text);

struct ExperimentConfig {
    SimulationSpec simulation;
    std::vector<NoiseKind> noise_kinds{NoiseKind::N0};
    std::vector<FitRequest> methods;
    std::size_t repetitions = 1;
    std::uint64_t master_seed = 0;
    std::filesystem::path output_dir = "bench_out";
    std::size_t parallelism = 1;
    /// Write one JSON per run (fit selections, model, scores) under runs/.
    bool save_runs = true;

    void validate() const;
};

ExperimentConfig experiment_config_from_json_text(const std::string& text);

struct BenchRow {
    std::string dataset;
    NoiseKind noise = NoiseKind::N0;
    Method method = Method::CSA;
    double gof = 0.0;
    std::optional<double> auc;
    std::size_t order = 0;
    std::optional<double> lambda;
    double seconds = 0.0;
    std::string error;  ///< empty on success
};

struct BenchOutcome {
    std::vector<BenchRow> rows;
    std::filesystem::path results_csv;
    std::filesystem::path summary_csv;
};

/// Seed of the dataset for one (repetition, noise kind) cell.
std::uint64_t bench_dataset_seed(std::uint64_t master, std::size_t repetition, NoiseKind noise);
/// Seed handed to the estimator of one run.
std::uint64_t bench_run_seed(std::uint64_t master, std::size_t repetition, NoiseKind noise,
                             Method method);

BenchOutcome cmd_bench(const ExperimentConfig& cfg);

std::string bench_results_csv(const std::vector<BenchRow>& rows);
std::string bench_summary_csv(const std::vector<BenchRow>& rows);

/// Linear-interpolation quantile of unsorted values (q in [0, 1]).
double quantile(std::vector<double> values, double q);

Dataset cmd_simulate(const SimulationSpec& spec, const std::filesystem::path& out);
FitResult cmd_fit(const std::filesystem::path& dataset_dir, const FitRequest& request,
                  const std::filesystem::path& out);
/// `model_file` holds either a fit result or a bare source model.
EvalReport cmd_eval(const std::filesystem::path& dataset_dir,
                    const std::filesystem::path& model_file);

/// Full command-line entry point; returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace scsa
