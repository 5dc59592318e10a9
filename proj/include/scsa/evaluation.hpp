#pragma once

// Scoring of estimated models against simulation ground truth: mixing-pattern
// goodness of fit after optimal pairing and connectivity AUC.

#include "scsa/simulator.hpp"
#include "scsa/types.hpp"

#include <optional>
#include <vector>

namespace scsa {

/// Least-squares c minimizing ||a - c b||.
double regression_coefficient(const Vector& a, const Vector& b);

/// ||c b - a|| / ||a|| with the optimal c.
double pattern_gof(const Vector& a, const Vector& b);

struct Pairing {
    /// true_of[f] is the true column matched to estimated column f.
    std::vector<Eigen::Index> true_of;
    /// scale[f] = regression coefficient of true column true_of[f] on estimated column f.
    Vector scale;
    double total_cost = 0.0;
};

/// Minimum-cost one-to-one assignment of estimated to true columns under the
/// pattern GOF cost (Hungarian algorithm).
Pairing optimal_pairing(const Matrix& true_mixing, const Matrix& est_mixing);

/// Square assignment on an arbitrary cost matrix; returns column per row.
std::vector<Eigen::Index> solve_assignment(const Matrix& cost);

/// ||adjusted - M||_F / ||M||_F, adjusted being the estimate permuted and
/// rescaled by the pairing.
double matrix_gof(const Matrix& true_mixing, const Matrix& est_mixing, const Pairing& pairing);

/// Probability that a positive score exceeds a negative one, ties counted 1/2.
/// Empty when either class is empty.
std::optional<double> mann_whitney_auc(const std::vector<double>& scores,
                                       const std::vector<bool>& labels);

/// Off-diagonal group norms of `est` mapped into the true source order with
/// the scale indeterminacy undone (entry (d, e) belongs to the true pair).
Matrix aligned_group_scores(const MvarCoefficients& est, const Pairing& pairing);

/// AUC of aligned group norms against the true off-diagonal support.
std::optional<double> connectivity_auc(const MvarCoefficients& est, const BoolMatrix& true_support,
                                       const Pairing& pairing);

struct EvalReport {
    double gof_error = 0.0;
    std::optional<double> auc;
    Vector per_pattern_gof;  ///< indexed by true column
    std::vector<Eigen::Index> true_of;
    std::size_t selected_order = 0;
    std::optional<double> selected_lambda;
    double wall_time_s = 0.0;
};

/// Scores a model. `lagged` supplies MVAR coefficients when the model has
/// none of its own (the ICA post-hoc fit); otherwise est.mvar is used.
EvalReport evaluate(const Dataset& truth, const SourceModel& est,
                    const std::optional<MvarCoefficients>& lagged = std::nullopt);

}  // namespace scsa
