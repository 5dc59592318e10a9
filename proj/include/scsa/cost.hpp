#pragma once

// Negative log-likelihood of the sech innovation model in both
// parameterizations, the Group-Lasso regularized cost and their gradients.
//
// All costs sum over t = P+1 .. T of every data segment; with several
// segments (cross-validation training sets) the determinant term is scaled by
// the total number of scored samples.

#include "scsa/types.hpp"

#include <span>
#include <vector>

namespace scsa {

inline constexpr double kDefaultTruncationThreshold = 1e-8;

struct GroupPenaltySpec {
    double lambda = 0.0;             ///< weight of each off-diagonal group
    bool penalize_diagonal = false;  ///< add lambda_diag * ||all H_dd||
    double lambda_diag = 0.0;

    static GroupPenaltySpec off_diagonal(double lambda) { return {lambda, false, 0.0}; }
    /// Diagonal penalty enabled with lambda_diag = lambda.
    static GroupPenaltySpec with_diagonal(double lambda) { return {lambda, true, lambda}; }
    void validate() const;
};

struct CostReport {
    double value = 0.0;
    Vector gradient;           ///< flat, same layout as the parameterization
    Matrix group_norms;        ///< (d, f) -> ||H_df(1..P)||; zeros for CSA
    /// Off-diagonal groups at or below the truncation threshold while lambda > 0.
    /// Their penalty gradient is undefined and left out of `gradient`.
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> singular_groups;
    bool diagonal_group_singular = false;
};

/// -log((1/pi) sech(e)) evaluated without overflow.
double neg_log_sech_density(double e);

double nll_csa(const FilterBank& fb, const TimeSeries& x);
CostReport grad_csa(const FilterBank& fb, const TimeSeries& x);

double cost_scsa(const SourceModel& model, const TimeSeries& x, const GroupPenaltySpec& pen);
CostReport grad_scsa(const SourceModel& model, const TimeSeries& x, const GroupPenaltySpec& pen,
                     double truncation_threshold = kDefaultTruncationThreshold);

/// Unpenalized negative log-likelihood of (B, H) scored on t = first+1 .. T
/// (1-based), first >= P. Used to compare models on a common window.
double nll_on_window(const SourceModel& model, const TimeSeries& x, Eigen::Index first);

/// Term-by-term evaluation of the SCSA cost over data segments.
struct ScsaTerms {
    double data = 0.0;       ///< sum of -log((1/pi) sech(s - s~))
    double log_det = 0.0;    ///< -(sum of T_i - P) log|det B|
    double penalty = 0.0;
    Eigen::Index scored_samples = 0;
    Matrix grad_b;                        ///< gradient of data + log_det
    std::vector<Matrix> grad_h_data;      ///< data-term gradient per lag
    std::vector<Matrix> grad_h_penalty;   ///< penalty gradient per lag
    Matrix group_norms;
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> singular_groups;
    bool diagonal_group_singular = false;

    double total() const { return data + log_det + penalty; }
};

/// Evaluates every term. A singular B gives log_det = +inf and no gradient.
ScsaTerms evaluate_scsa_terms(const Matrix& b, const std::vector<Matrix>& h,
                              std::span<const TimeSeries> segments, const GroupPenaltySpec& pen,
                              double truncation_threshold, bool with_gradient);

/// Group-Lasso penalty value of H alone.
double group_penalty(const std::vector<Matrix>& h, const GroupPenaltySpec& pen);

/// Flat-vector objectives for the optimizers. Both return +inf (and leave the
/// gradient untouched) when the leading matrix is singular.
double csa_objective(const Vector& w, std::span<const TimeSeries> segments, Eigen::Index dim,
                     std::size_t order, Vector* grad);
/// Gradient of groups at or below the threshold omits the penalty part.
double scsa_objective(const Vector& theta, std::span<const TimeSeries> segments, Eigen::Index dim,
                      std::size_t order, const GroupPenaltySpec& pen, double truncation_threshold,
                      Vector* grad);

}  // namespace scsa
