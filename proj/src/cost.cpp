#include "scsa/cost.hpp"

#include "scsa/errors.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace scsa {

namespace {

const double kLogPi = std::log(std::numbers::pi);
constexpr double kInf = std::numeric_limits<double>::infinity();

double log_cosh(double e) {
    const double a = std::abs(e);
    return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

// log|det m| and the LU used to get it; -inf for an exactly singular matrix.
double log_abs_det(const Eigen::PartialPivLU<Matrix>& lu) {
    double acc = 0.0;
    const auto& u = lu.matrixLU();
    for (Eigen::Index i = 0; i < u.rows(); ++i) acc += std::log(std::abs(u(i, i)));
    return acc;
}

void check_segments(std::span<const TimeSeries> segments, Eigen::Index dim, std::size_t order) {
    if (segments.empty()) throw InsufficientDataError("no data segments");
    for (const auto& s : segments) {
        if (s.channels() != dim) throw ShapeError("data and model dimensions differ");
        if (s.samples() <= static_cast<Eigen::Index>(order))
            throw InsufficientDataError("segment of " + std::to_string(s.samples()) +
                                        " samples is too short for order " +
                                        std::to_string(order));
    }
}

void throw_on_nonfinite(const Matrix& m, const char* what) {
    for (Eigen::Index t = 0; t < m.cols(); ++t)
        for (Eigen::Index d = 0; d < m.rows(); ++d)
            if (!std::isfinite(m(d, t)))
                throw NumericError(std::string("nonfinite ") + what + " at channel " +
                                   std::to_string(d) + ", sample " + std::to_string(t));
}

double sum_neg_log_density(const Matrix& e) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < e.size(); ++i) acc += log_cosh(e.data()[i]);
    return acc + kLogPi * static_cast<double>(e.size());
}

struct CsaEval {
    double value = kInf;
    std::vector<Matrix> grad;
};

CsaEval evaluate_csa(const std::vector<Matrix>& taps, std::span<const TimeSeries> segments,
                     bool with_gradient, bool throw_nonfinite) {
    const auto order = static_cast<Eigen::Index>(taps.size()) - 1;
    const Eigen::PartialPivLU<Matrix> lu(taps.front());
    const double logdet = log_abs_det(lu);
    CsaEval out;
    if (!std::isfinite(logdet)) {
        if (throw_nonfinite) throw DegenerateModelError("W(0) is singular");
        return out;
    }
    Eigen::Index scored = 0;
    double data = 0.0;
    if (with_gradient)
        out.grad.assign(taps.size(), Matrix::Zero(taps.front().rows(), taps.front().cols()));
    for (const auto& seg : segments) {
        const auto& x = seg.data();
        const Eigen::Index n = x.cols() - order;
        Matrix e = taps[0] * x.middleCols(order, n);
        for (Eigen::Index p = 1; p <= order; ++p)
            e.noalias() += taps[static_cast<std::size_t>(p)] * x.middleCols(order - p, n);
        if (throw_nonfinite) throw_on_nonfinite(e, "innovation");
        data += sum_neg_log_density(e);
        scored += n;
        if (with_gradient) {
            const Matrix g = e.array().tanh().matrix();
            for (Eigen::Index p = 0; p <= order; ++p)
                out.grad[static_cast<std::size_t>(p)].noalias() +=
                    g * x.middleCols(order - p, n).transpose();
        }
    }
    out.value = -static_cast<double>(scored) * logdet + data;
    if (with_gradient)
        out.grad[0] -= static_cast<double>(scored) * lu.inverse().transpose();
    return out;
}

}  // namespace

void GroupPenaltySpec::validate() const {
    if (!(lambda >= 0.0) || !(lambda_diag >= 0.0) || !std::isfinite(lambda) ||
        !std::isfinite(lambda_diag))
        throw UsageError("penalty weights must be finite and nonnegative");
}

double neg_log_sech_density(double e) { return kLogPi + log_cosh(e); }

double nll_csa(const FilterBank& fb, const TimeSeries& x) {
    fb.validate();
    const TimeSeries segs[] = {x};
    check_segments(segs, fb.dim(), fb.order());
    return evaluate_csa(fb.taps, segs, false, true).value;
}

CostReport grad_csa(const FilterBank& fb, const TimeSeries& x) {
    fb.validate();
    const TimeSeries segs[] = {x};
    check_segments(segs, fb.dim(), fb.order());
    CsaEval ev = evaluate_csa(fb.taps, segs, true, true);
    CostReport rep;
    rep.value = ev.value;
    rep.gradient = flatten(FilterBank{std::move(ev.grad)});
    rep.group_norms = Matrix::Zero(fb.dim(), fb.dim());
    rep.singular_groups.setConstant(fb.dim(), fb.dim(), false);
    return rep;
}

double group_penalty(const std::vector<Matrix>& h, const GroupPenaltySpec& pen) {
    if (h.empty()) return 0.0;
    const auto dim = h.front().rows();
    Matrix sq = Matrix::Zero(dim, dim);
    for (const auto& m : h) sq.array() += m.array().square();
    double off = 0.0;
    for (Eigen::Index d = 0; d < dim; ++d)
        for (Eigen::Index f = 0; f < dim; ++f)
            if (d != f) off += std::sqrt(sq(d, f));
    double value = pen.lambda * off;
    if (pen.penalize_diagonal) value += pen.lambda_diag * std::sqrt(sq.diagonal().sum());
    return value;
}

ScsaTerms evaluate_scsa_terms(const Matrix& b, const std::vector<Matrix>& h,
                              std::span<const TimeSeries> segments, const GroupPenaltySpec& pen,
                              double truncation_threshold, bool with_gradient) {
    const auto dim = b.rows();
    const auto order = static_cast<Eigen::Index>(h.size());
    ScsaTerms out;

    // Penalty and group bookkeeping.
    Matrix sq = Matrix::Zero(dim, dim);
    for (const auto& m : h) sq.array() += m.array().square();
    out.group_norms = sq.array().sqrt();
    out.singular_groups.setConstant(dim, dim, false);
    out.penalty = group_penalty(h, pen);
    const double diag_norm = std::sqrt(sq.diagonal().sum());
    if (with_gradient) {
        out.grad_h_penalty.assign(h.size(), Matrix::Zero(dim, dim));
        for (Eigen::Index d = 0; d < dim; ++d) {
            for (Eigen::Index f = 0; f < dim; ++f) {
                if (d == f || order == 0) continue;
                const double norm = out.group_norms(d, f);
                if (norm <= truncation_threshold) {
                    out.singular_groups(d, f) = pen.lambda > 0.0;
                    continue;
                }
                for (std::size_t p = 0; p < h.size(); ++p)
                    out.grad_h_penalty[p](d, f) = pen.lambda * h[p](d, f) / norm;
            }
        }
        if (pen.penalize_diagonal && order > 0) {
            if (diag_norm <= truncation_threshold) {
                out.diagonal_group_singular = pen.lambda_diag > 0.0;
            } else {
                for (std::size_t p = 0; p < h.size(); ++p)
                    for (Eigen::Index d = 0; d < dim; ++d)
                        out.grad_h_penalty[p](d, d) = pen.lambda_diag * h[p](d, d) / diag_norm;
            }
        }
    }

    const Eigen::PartialPivLU<Matrix> lu(b);
    const double logdet = log_abs_det(lu);
    if (!std::isfinite(logdet)) {
        out.log_det = kInf;
        return out;
    }

    if (with_gradient) {
        out.grad_b = Matrix::Zero(dim, dim);
        out.grad_h_data.assign(h.size(), Matrix::Zero(dim, dim));
    }
    for (const auto& seg : segments) {
        const auto& x = seg.data();
        const Eigen::Index n = x.cols() - order;
        const Matrix s = b * x;
        Matrix r = s.middleCols(order, n);
        for (Eigen::Index p = 1; p <= order; ++p)
            r.noalias() -= h[static_cast<std::size_t>(p - 1)] * s.middleCols(order - p, n);
        out.data += sum_neg_log_density(r);
        out.scored_samples += n;
        if (!with_gradient) continue;
        const Matrix g = r.array().tanh().matrix();
        // d/dB: r = B x(t) - sum_p H(p) B x(t-p)
        out.grad_b.noalias() += g * x.middleCols(order, n).transpose();
        for (Eigen::Index p = 1; p <= order; ++p) {
            const auto k = static_cast<std::size_t>(p - 1);
            out.grad_h_data[k].noalias() -= g * s.middleCols(order - p, n).transpose();
            out.grad_b.noalias() -= h[k].transpose() * (g * x.middleCols(order - p, n).transpose());
        }
    }
    out.log_det = -static_cast<double>(out.scored_samples) * logdet;
    if (with_gradient)
        out.grad_b -= static_cast<double>(out.scored_samples) * lu.inverse().transpose();
    return out;
}

namespace {

CostReport to_report(const ScsaTerms& terms, Eigen::Index dim) {
    CostReport rep;
    rep.value = terms.total();
    std::vector<Matrix> gh(terms.grad_h_data.size());
    for (std::size_t p = 0; p < gh.size(); ++p) gh[p] = terms.grad_h_data[p] + terms.grad_h_penalty[p];
    rep.gradient = flatten(SourceModel{terms.grad_b, MvarCoefficients(dim, std::move(gh))});
    rep.group_norms = terms.group_norms;
    rep.singular_groups = terms.singular_groups;
    rep.diagonal_group_singular = terms.diagonal_group_singular;
    return rep;
}

void check_model_data(const SourceModel& model, const TimeSeries& x, const GroupPenaltySpec& pen) {
    model.validate();
    pen.validate();
    const TimeSeries segs[] = {x};
    check_segments(segs, model.dim(), model.order());
    // Surface nonfinite residuals with their position.
    const FilterBank fb{[&] {
        std::vector<Matrix> taps{model.demixing};
        for (std::size_t p = 1; p <= model.order(); ++p)
            taps.push_back(-model.mvar.lag(p) * model.demixing);
        return taps;
    }()};
    const auto order = static_cast<Eigen::Index>(model.order());
    const Eigen::Index n = x.samples() - order;
    Matrix e = fb.taps[0] * x.data().middleCols(order, n);
    for (Eigen::Index p = 1; p <= order; ++p)
        e.noalias() += fb.taps[static_cast<std::size_t>(p)] * x.data().middleCols(order - p, n);
    throw_on_nonfinite(e, "residual");
}

}  // namespace

double cost_scsa(const SourceModel& model, const TimeSeries& x, const GroupPenaltySpec& pen) {
    check_model_data(model, x, pen);
    const TimeSeries segs[] = {x};
    return evaluate_scsa_terms(model.demixing, model.mvar.lags(), segs, pen,
                               kDefaultTruncationThreshold, false)
        .total();
}

CostReport grad_scsa(const SourceModel& model, const TimeSeries& x, const GroupPenaltySpec& pen,
                     double truncation_threshold) {
    check_model_data(model, x, pen);
    const TimeSeries segs[] = {x};
    const ScsaTerms terms = evaluate_scsa_terms(model.demixing, model.mvar.lags(), segs, pen,
                                                truncation_threshold, true);
    return to_report(terms, model.dim());
}

double nll_on_window(const SourceModel& model, const TimeSeries& x, Eigen::Index first) {
    const auto order = static_cast<Eigen::Index>(model.order());
    if (first < order) throw UsageError("scoring window starts before the model order");
    if (first >= x.samples()) throw InsufficientDataError("empty scoring window");
    const TimeSeries window = x.slice(first - order, x.samples() - first + order);
    return cost_scsa(model, window, GroupPenaltySpec{});
}

double csa_objective(const Vector& w, std::span<const TimeSeries> segments, Eigen::Index dim,
                     std::size_t order, Vector* grad) {
    FilterBank fb = unflatten_filter_bank(w, dim, order);
    CsaEval ev = evaluate_csa(fb.taps, segments, grad != nullptr, false);
    if (!std::isfinite(ev.value)) return kInf;
    if (grad) *grad = flatten(FilterBank{std::move(ev.grad)});
    return ev.value;
}

double scsa_objective(const Vector& theta, std::span<const TimeSeries> segments, Eigen::Index dim,
                      std::size_t order, const GroupPenaltySpec& pen, double truncation_threshold,
                      Vector* grad) {
    SourceModel m = unflatten_source_model(theta, dim, order);
    const ScsaTerms terms = evaluate_scsa_terms(m.demixing, m.mvar.lags(), segments, pen,
                                                truncation_threshold, grad != nullptr);
    const double value = terms.total();
    if (!std::isfinite(value)) return kInf;
    if (grad) *grad = to_report(terms, dim).gradient;
    return value;
}

}  // namespace scsa
