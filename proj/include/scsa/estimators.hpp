#pragma once

// Estimator facade: CSA, SCSA (joint), SCSA-EM, MVARICA and instantaneous ICA,
// plus BIC model-order selection and blocked cross-validation for lambda.

#include "scsa/cost.hpp"
#include "scsa/em_dal.hpp"
#include "scsa/optim.hpp"
#include "scsa/types.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace scsa {

enum class Method { CSA, SCSA, SCSA_EM, MVARICA, ICA };

std::string to_string(Method m);
/// Accepts "csa", "scsa", "scsa_em", "mvarica", "ica" (case-insensitive).
Method parse_method(const std::string& name);

struct EstimatorOptions {
    OptimizerConfig optimizer;
    DalConfig dal;
    std::size_t em_steps = 20;
    /// Tighter settings used for the convex E-step.
    OptimizerConfig e_step = [] {
        OptimizerConfig c;
        c.grad_tol = 1e-9;
        return c;
    }();
};

struct Fitted {
    SourceModel model;
    OptimizationTrace trace;
};

/// ML fit of the FIR filter bank from W(0) = I, W(p) = 0, mapped to (B, H).
Fitted fit_csa(std::span<const TimeSeries> segments, std::size_t order,
               const EstimatorOptions& opts = {});
Fitted fit_csa(const TimeSeries& x, std::size_t order, const EstimatorOptions& opts = {});

/// Joint Group-Lasso fit with group truncation, warm-started from `warm`
/// (typically the CSA solution) or from fit_csa when absent.
Fitted fit_scsa(std::span<const TimeSeries> segments, std::size_t order,
                const GroupPenaltySpec& pen, const EstimatorOptions& opts = {},
                const std::optional<SourceModel>& warm = std::nullopt);
Fitted fit_scsa(const TimeSeries& x, std::size_t order, const GroupPenaltySpec& pen,
                const EstimatorOptions& opts = {});

/// fit_scsa followed by opts.em_steps rounds of E/M refinement.
Fitted fit_scsa_em(const TimeSeries& x, std::size_t order, const GroupPenaltySpec& pen,
                   const EstimatorOptions& opts = {},
                   const std::optional<SourceModel>& warm = std::nullopt);

/// Sensor-space least-squares MVAR, ICA of its residuals, and the source
/// coefficients H(p) = B A(p) B^-1.
Fitted fit_mvarica(const TimeSeries& x, std::size_t order, const EstimatorOptions& opts = {});

/// Instantaneous ML ICA under the sech density (CSA with P = 0).
Fitted fit_ica(const TimeSeries& x, const EstimatorOptions& opts = {});

/// Penalized groups of the SCSA parameter vector: every off-diagonal (d, f)
/// group plus, when enabled, the single diagonal group.
std::vector<ParameterGroup> scsa_parameter_groups(Eigen::Index dim, std::size_t order,
                                                  const GroupPenaltySpec& pen);

struct OrderSelection {
    std::size_t order = 0;
    std::map<std::size_t, double> bic;   ///< per candidate that fitted
    std::vector<std::string> warnings;   ///< candidates that failed
};

/// BIC(P) = 2 NLL on t = P_max+1 .. T + D^2 (P+1) log(T - P_max).
/// SCSA and SCSA_EM are scored through their unpenalized CSA fit; ICA has no
/// temporal order and is rejected.
OrderSelection select_order_bic(const TimeSeries& x, Method method,
                                std::span<const std::size_t> candidates,
                                const EstimatorOptions& opts = {});

struct LambdaSelection {
    double lambda = 0.0;
    std::map<double, double> cv_curve;  ///< lambda -> mean held-out NLL per sample
};

/// Contiguous-block K-fold cross-validation of the SCSA penalty weight.
/// `seed` is accepted for interface stability; the blocked partition is
/// deterministic.
LambdaSelection select_lambda_cv(const TimeSeries& x, std::size_t order,
                                 std::span<const double> lambda_grid, std::size_t folds,
                                 std::uint64_t seed, const EstimatorOptions& opts = {},
                                 bool penalize_diagonal = false);

/// 12 log-spaced values over [1e-3, 1e2] scaled by T / 2000.
std::vector<double> default_lambda_grid(Eigen::Index samples);

struct FitRequest {
    Method method = Method::SCSA;
    std::vector<std::size_t> order_candidates{1, 2, 3, 4, 5, 6, 7};
    /// Empty means AUTO (cross-validated over default_lambda_grid); one value
    /// is used as is; several values are cross-validated.
    std::vector<double> lambda_grid;
    std::size_t cv_folds = 5;
    std::uint64_t seed = 0;
    bool penalize_diagonal = false;
    void validate() const;
};

struct FitResult {
    Method method = Method::CSA;
    SourceModel model;
    std::size_t selected_order = 0;
    std::optional<double> selected_lambda;
    std::map<std::size_t, double> bic_per_order;
    std::map<double, double> cv_curve;
    /// ICA only: least-squares MVAR of the demixed sources at selected_order.
    std::optional<MvarCoefficients> posthoc_mvar;
    OptimizationTrace trace;
    double wall_time_s = 0.0;
    std::vector<std::string> warnings;
};

/// Full pipeline: order by BIC, lambda by CV when requested, final fit.
/// For ICA the selected order belongs to the post-hoc least-squares MVAR of
/// the demixed sources and the returned model has no lags.
FitResult run_fit(const TimeSeries& x, const FitRequest& request,
                  const EstimatorOptions& opts = {});

}  // namespace scsa
