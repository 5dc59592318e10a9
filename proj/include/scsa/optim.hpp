#pragma once

// Limited-memory BFGS with Armijo backtracking, plus a variant for objectives
// carrying a Group-Lasso term whose groups may sit exactly at zero.

#include "scsa/errors.hpp"
#include "scsa/types.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace scsa {

struct LineSearchConfig {
    double sufficient_decrease = 1e-4;
    double contraction = 0.5;
    std::size_t max_backtracks = 80;
};

struct OptimizerConfig {
    std::size_t memory = 10;
    std::size_t max_iters = 2000;
    /// Stop when ||grad||_inf <= grad_tol * (relative_grad_tol ? max(1, |f|) : 1).
    double grad_tol = 1e-6;
    bool relative_grad_tol = true;
    /// Stop when |f_k - f_{k-1}| <= value_tol * max(1, |f|) holds for
    /// value_tol_window consecutive iterations. 0 disables the test.
    double value_tol = 1e-10;
    std::size_t value_tol_window = 5;
    LineSearchConfig line_search;
    /// Penalized groups with norm below this are set exactly to zero.
    double truncation_threshold = 1e-8;
    /// Iterations a freshly zeroed group stays pinned at zero.
    std::size_t zero_dwell = 3;

    void validate() const;
    double effective_grad_tol(double f) const;
};

enum class StopReason { GradientTolerance, ValueTolerance, PrecisionLimit, MaxIterations };

const char* to_string(StopReason r);

struct OptimizationTrace {
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    double final_value = 0.0;
    double final_grad_norm = 0.0;  ///< sup norm of the (pseudo-)gradient
    bool converged = false;
    StopReason reason = StopReason::MaxIterations;
    std::vector<double> value_history;
};

/// Objective callback: returns f(x) and, when grad != nullptr, writes the
/// gradient. Returning +inf marks x as infeasible (the line search backs off).
using Objective = std::function<double(const Vector& x, Vector* grad)>;

struct OptimizationResult {
    Vector x;
    OptimizationTrace trace;
};

/// Raised when no step along a descent direction yields a finite objective.
class StagnationError : public Error {
public:
    StagnationError(const std::string& what, Vector last, OptimizationTrace trace)
        : Error(what), last_iterate(std::move(last)), trace(std::move(trace)) {}
    Vector last_iterate;
    OptimizationTrace trace;
};

OptimizationResult minimize(const Objective& objective, Vector x0, const OptimizerConfig& cfg);

struct ParameterGroup {
    std::vector<Eigen::Index> indices;
    double weight = 0.0;  ///< penalty weight (lambda) of the group's l2 norm
};

/// The objective must include weight * ||x_G|| for every group with norm above
/// cfg.truncation_threshold and leave that term out of the gradient of groups
/// at or below it (scsa_objective does). At zeroed groups the minimum-norm
/// subgradient replaces the gradient.
OptimizationResult minimize_with_group_truncation(const Objective& objective, Vector x0,
                                                  std::span<const ParameterGroup> groups,
                                                  const OptimizerConfig& cfg);

/// Minimum-norm element of g + weight * (unit ball): zero if ||g|| <= weight,
/// otherwise g shrunk radially by weight.
Vector min_norm_subgradient(const Vector& g, double weight);

}  // namespace scsa
