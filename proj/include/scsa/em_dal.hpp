#pragma once

// Alternating SCSA estimation: the demixing matrix B is refit with H fixed
// ("E-step", smooth and convex) and the MVAR coefficients H are refit with B
// fixed ("M-step", convex Group Lasso solved by a dual augmented Lagrangian).

#include "scsa/cost.hpp"
#include "scsa/optim.hpp"
#include "scsa/types.hpp"

#include <cstddef>
#include <vector>

namespace scsa {

struct DalConfig {
    /// Augmented-Lagrangian parameters, strictly increasing. Iterations past
    /// the end of the schedule reuse its last entry.
    std::vector<double> eta_schedule = geometric_schedule(1.0, 4.0, 16);
    /// Inner Newton stops when ||(1 - a^2) grad||_inf of the dual objective (the
    /// gradient in atanh coordinates) drops below this.
    double inner_newton_tol = 1e-10;
    std::size_t max_outer = 60;
    std::size_t max_inner = 60;
    /// Outer loop stops once the KKT residuals are below this.
    double kkt_tol = 1e-7;

    static std::vector<double> geometric_schedule(double eta0, double factor, std::size_t count);
    void validate() const;
};

/// Dual variables a_d(t) of the sech loss, each strictly inside (-1, 1).
class DualVariables {
public:
    explicit DualVariables(Matrix a);
    const Matrix& values() const { return a_; }

private:
    Matrix a_;
};

/// Entries are clamped to |a| <= 1 - kDualClamp before use.
inline constexpr double kDualClamp = 1e-12;

/// sum_{t,d} -log((1/pi) sech(s~ - s)).
double m_loss(const Matrix& s_tilde, const Matrix& s);

/// Legendre transform sup_{s~} (a s~ + log((1/pi) sech(s~ - s))), summed:
///   ((1-a)/2) log((1-a)/2) + ((1+a)/2) log((1+a)/2) + a s + log(2/pi).
double m_loss_conjugate(const DualVariables& a, const Matrix& s);

struct ConjugateDerivatives {
    Matrix gradient;  ///< atanh(a) + s
    Matrix hessian;   ///< diagonal entries 1 / (1 - a^2), the derivative of the gradient, same shape as a
};
ConjugateDerivatives m_loss_conjugate_grad_hess(const DualVariables& a, const Matrix& s);

/// Group-Lasso optimality residuals of an M-step solution.
struct KktReport {
    /// max over zero penalized groups of ||data gradient|| / weight
    double zero_group_ratio = 0.0;
    /// max over nonzero (or unpenalized) groups of ||data grad + penalty grad||_2
    double stationarity = 0.0;
    bool satisfied(double stationarity_tol, double ratio_slack = 1e-6) const {
        return zero_group_ratio <= 1.0 + ratio_slack && stationarity <= stationarity_tol;
    }
};

/// Residuals for min_H m_loss(s~(H), s) + penalty with s~(t) = sum_p H(p) s(t-p).
KktReport m_step_kkt(const TimeSeries& sources, const MvarCoefficients& h,
                     const GroupPenaltySpec& pen);

/// M-step objective value (loss plus penalty).
double m_step_objective(const TimeSeries& sources, const MvarCoefficients& h,
                        const GroupPenaltySpec& pen);

struct MStepResult {
    MvarCoefficients h;
    double objective = 0.0;
    std::size_t outer_iterations = 0;
    std::size_t newton_iterations = 0;
    KktReport kkt;
    bool converged = false;
};

/// Dual augmented Lagrangian solve of the M-step. Throws DalError (carrying
/// nothing) when the inner Newton iterations fail to decrease the dual.
MStepResult solve_m_step_dal(const TimeSeries& sources, std::size_t order,
                             const GroupPenaltySpec& pen, const MvarCoefficients& h0,
                             const DalConfig& cfg);

/// Accelerated proximal gradient on the same convex objective.
MStepResult solve_m_step_proximal_gradient(const TimeSeries& sources, std::size_t order,
                                           const GroupPenaltySpec& pen,
                                           const MvarCoefficients& h0, std::size_t max_iters,
                                           double kkt_tol);

/// DAL solve falling back to proximal gradient if the DAL inner solver fails.
MvarCoefficients m_step_dal(const TimeSeries& sources, std::size_t order,
                            const GroupPenaltySpec& pen, const MvarCoefficients& h0,
                            const DalConfig& cfg);

/// Minimizes the SCSA cost over B with H fixed, starting from b0.
Matrix e_step(const TimeSeries& x, const MvarCoefficients& h, const Matrix& b0,
              const OptimizerConfig& cfg);

struct EmResult {
    SourceModel model;
    /// Composite cost at the warm start and after every half-step.
    std::vector<double> cost_history;
    std::size_t steps = 0;
};

/// Alternates e_step and m_step_dal from a warm start for at most em_steps
/// rounds, stopping early when the relative composite-cost change of a round
/// drops below rel_tol. A half-step that would raise the cost is rejected.
EmResult refine_scsa_em(const TimeSeries& x, const SourceModel& warm_start,
                        const GroupPenaltySpec& pen, std::size_t em_steps,
                        const OptimizerConfig& opt_cfg = {}, const DalConfig& dal_cfg = {},
                        double rel_tol = 1e-8);

}  // namespace scsa
