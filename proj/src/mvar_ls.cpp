#include "scsa/mvar_ls.hpp"

#include "scsa/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace scsa {

namespace {

// Stacked lag design: rows p*D .. p*D+D-1 hold x(t-p-1) for t in the window.
Matrix lagged_design(const Matrix& x, Eigen::Index order, Eigen::Index first, Eigen::Index n) {
    const auto d = x.rows();
    Matrix z(d * order, n);
    for (Eigen::Index p = 0; p < order; ++p) z.middleRows(p * d, d) = x.middleCols(first - p - 1, n);
    return z;
}

struct WindowFit {
    std::vector<Matrix> lags;
    Matrix residuals;
};

WindowFit fit_window(const Matrix& x, Eigen::Index order, Eigen::Index first) {
    const auto d = x.rows();
    const auto n = x.cols() - first;
    const Matrix y = x.middleCols(first, n);
    if (order == 0) return {{}, y};
    const Matrix z = lagged_design(x, order, first, n);
    const Matrix gram = z * z.transpose();
    Eigen::LDLT<Matrix> ldlt(gram);
    const double diag_max = gram.diagonal().cwiseAbs().maxCoeff();
    if (ldlt.info() != Eigen::Success || n < d * order ||
        ldlt.vectorD().minCoeff() <= 1e-12 * std::max(1.0, diag_max))
        throw IllPosedError("lagged design matrix is rank deficient");
    const Matrix a = ldlt.solve(z * y.transpose()).transpose();  // D x (D P)
    WindowFit out;
    for (Eigen::Index p = 0; p < order; ++p) out.lags.push_back(a.middleCols(p * d, d));
    out.residuals = y - a * z;
    return out;
}

}  // namespace

LeastSquaresMvar fit_mvar_least_squares(const TimeSeries& x, std::size_t order) {
    const auto p = static_cast<Eigen::Index>(order);
    if (x.samples() <= p) throw InsufficientDataError("need more samples than the MVAR order");
    WindowFit fit = fit_window(x.data(), p, p);
    const auto n = static_cast<double>(fit.residuals.cols());
    Matrix cov = fit.residuals * fit.residuals.transpose() / n;
    return {MvarCoefficients(x.channels(), std::move(fit.lags)), std::move(fit.residuals),
            std::move(cov)};
}

std::size_t select_mvar_order_least_squares(const TimeSeries& x,
                                            std::span<const std::size_t> orders) {
    if (orders.empty()) throw UsageError("no candidate orders");
    const auto p_max = static_cast<Eigen::Index>(*std::max_element(orders.begin(), orders.end()));
    if (x.samples() <= p_max) throw InsufficientDataError("need more samples than the MVAR order");
    const auto d = static_cast<double>(x.channels());
    const auto n = static_cast<double>(x.samples() - p_max);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_order = orders.front();
    for (auto order : orders) {
        const WindowFit fit = fit_window(x.data(), static_cast<Eigen::Index>(order), p_max);
        const Matrix cov = fit.residuals * fit.residuals.transpose() / n;
        const double logdet = Eigen::LDLT<Matrix>(cov).vectorD().array().log().sum();
        const double bic = n * logdet + d * d * static_cast<double>(order) * std::log(n);
        if (bic < best) {
            best = bic;
            best_order = order;
        }
    }
    return best_order;
}

}  // namespace scsa
