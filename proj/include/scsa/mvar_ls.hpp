#pragma once

#include "scsa/types.hpp"

#include <span>

namespace scsa {

struct LeastSquaresMvar {
    MvarCoefficients coefficients;
    Matrix residuals;             ///< D x (T - P)
    Matrix residual_covariance;   ///< residuals residuals^T / (T - P)
};

/// Ordinary least-squares MVAR fit x(t) ~ sum_p A(p) x(t-p), t = P+1 .. T.
/// Throws IllPosedError when the lagged design is rank deficient.
LeastSquaresMvar fit_mvar_least_squares(const TimeSeries& x, std::size_t order);

/// Gaussian BIC order choice for a least-squares MVAR, all orders scored on
/// the window t = max(orders)+1 .. T.
std::size_t select_mvar_order_least_squares(const TimeSeries& x,
                                            std::span<const std::size_t> orders);

}  // namespace scsa
