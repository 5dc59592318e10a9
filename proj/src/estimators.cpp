#include "scsa/estimators.hpp"

#include "scsa/errors.hpp"
#include "scsa/model.hpp"
#include "scsa/mvar_ls.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <limits>

namespace scsa {

std::string to_string(Method m) {
    switch (m) {
        case Method::CSA: return "CSA";
        case Method::SCSA: return "SCSA";
        case Method::SCSA_EM: return "SCSA_EM";
        case Method::MVARICA: return "MVARICA";
        case Method::ICA: return "ICA";
    }
    return "?";
}

Method parse_method(const std::string& name) {
    std::string lower;
    for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (lower == "csa") return Method::CSA;
    if (lower == "scsa") return Method::SCSA;
    if (lower == "scsa_em" || lower == "scsa-em") return Method::SCSA_EM;
    if (lower == "mvarica") return Method::MVARICA;
    if (lower == "ica") return Method::ICA;
    throw UsageError("unknown method '" + name + "'");
}

Fitted fit_csa(std::span<const TimeSeries> segments, std::size_t order,
               const EstimatorOptions& opts) {
    if (segments.empty()) throw InsufficientDataError("no data to fit");
    const auto dim = segments.front().channels();
    FilterBank init;
    init.taps.push_back(Matrix::Identity(dim, dim));
    for (std::size_t p = 0; p < order; ++p) init.taps.push_back(Matrix::Zero(dim, dim));
    for (const auto& s : segments)
        if (s.samples() <= static_cast<Eigen::Index>(order))
            throw InsufficientDataError("segment too short for the model order");

    const Objective objective = [&](const Vector& w, Vector* grad) {
        return csa_objective(w, segments, dim, order, grad);
    };
    OptimizationResult res = minimize(objective, flatten(init), opts.optimizer);
    const FilterBank fb = unflatten_filter_bank(res.x, dim, order);
    return {filter_bank_to_source_model(fb), std::move(res.trace)};
}

Fitted fit_csa(const TimeSeries& x, std::size_t order, const EstimatorOptions& opts) {
    const TimeSeries segs[] = {x};
    return fit_csa(segs, order, opts);
}

std::vector<ParameterGroup> scsa_parameter_groups(Eigen::Index dim, std::size_t order,
                                                  const GroupPenaltySpec& pen) {
    std::vector<ParameterGroup> groups;
    if (order == 0) return groups;
    for (Eigen::Index d = 0; d < dim; ++d) {
        for (Eigen::Index f = 0; f < dim; ++f) {
            if (d == f) continue;
            ParameterGroup g;
            g.weight = pen.lambda;
            for (std::size_t p = 1; p <= order; ++p) g.indices.push_back(source_model_index(dim, p, d, f));
            groups.push_back(std::move(g));
        }
    }
    if (pen.penalize_diagonal) {
        ParameterGroup g;
        g.weight = pen.lambda_diag;
        for (std::size_t p = 1; p <= order; ++p)
            for (Eigen::Index d = 0; d < dim; ++d) g.indices.push_back(source_model_index(dim, p, d, d));
        groups.push_back(std::move(g));
    }
    return groups;
}

Fitted fit_scsa(std::span<const TimeSeries> segments, std::size_t order,
                const GroupPenaltySpec& pen, const EstimatorOptions& opts,
                const std::optional<SourceModel>& warm) {
    pen.validate();
    const SourceModel start = warm ? *warm : fit_csa(segments, order, opts).model;
    start.validate();
    if (start.order() != order) throw ShapeError("warm start has a different model order");
    const auto dim = start.dim();
    const double threshold = opts.optimizer.truncation_threshold;
    const Objective objective = [&](const Vector& theta, Vector* grad) {
        return scsa_objective(theta, segments, dim, order, pen, threshold, grad);
    };
    const auto groups = scsa_parameter_groups(dim, order, pen);
    OptimizationResult res =
        minimize_with_group_truncation(objective, flatten(start), groups, opts.optimizer);
    SourceModel model = unflatten_source_model(res.x, dim, order);
    model.validate();
    return {std::move(model), std::move(res.trace)};
}

Fitted fit_scsa(const TimeSeries& x, std::size_t order, const GroupPenaltySpec& pen,
                const EstimatorOptions& opts) {
    const TimeSeries segs[] = {x};
    return fit_scsa(segs, order, pen, opts);
}

Fitted fit_scsa_em(const TimeSeries& x, std::size_t order, const GroupPenaltySpec& pen,
                   const EstimatorOptions& opts, const std::optional<SourceModel>& warm) {
    const TimeSeries segs[] = {x};
    Fitted joint = fit_scsa(segs, order, pen, opts, warm);
    EmResult em = refine_scsa_em(x, joint.model, pen, opts.em_steps, opts.e_step, opts.dal);
    joint.model = std::move(em.model);
    return joint;
}

Fitted fit_mvarica(const TimeSeries& x, std::size_t order, const EstimatorOptions& opts) {
    const LeastSquaresMvar sensor = fit_mvar_least_squares(x, order);
    Fitted ica = fit_csa(TimeSeries(sensor.residuals), 0, opts);
    const Matrix& b = ica.model.demixing;
    const Eigen::PartialPivLU<Matrix> lu_t(b.transpose());
    std::vector<Matrix> lags;
    for (const auto& a : sensor.coefficients.lags()) {
        // B A B^-1 = (B^-T (B A)^T)^T
        lags.push_back(lu_t.solve((b * a).transpose()).transpose());
    }
    ica.model.mvar = MvarCoefficients(x.channels(), std::move(lags));
    ica.model.validate();
    return ica;
}

Fitted fit_ica(const TimeSeries& x, const EstimatorOptions& opts) {
    if (x.samples() < x.channels()) throw InsufficientDataError("ICA needs T >= D");
    Fitted f = fit_csa(x, 0, opts);
    f.model.validate();
    return f;
}

namespace {

struct BicScan {
    OrderSelection selection;
    std::map<std::size_t, Fitted> fits;
};

BicScan bic_scan(const TimeSeries& x, Method method, std::span<const std::size_t> candidates,
                 const EstimatorOptions& opts) {
    if (candidates.empty()) throw UsageError("no candidate model orders");
    if (method == Method::ICA) throw UsageError("ICA has no temporal model order to select");
    const std::size_t p_max = *std::max_element(candidates.begin(), candidates.end());
    const auto window = static_cast<Eigen::Index>(p_max);
    if (x.samples() <= window) throw InsufficientDataError("too few samples for the largest order");
    const double d2 = static_cast<double>(x.channels() * x.channels());
    const double log_n = std::log(static_cast<double>(x.samples() - window));

    BicScan scan;
    double best = std::numeric_limits<double>::infinity();
    for (auto order : candidates) {
        if (scan.fits.count(order)) continue;
        try {
            Fitted f = method == Method::MVARICA ? fit_mvarica(x, order, opts) : fit_csa(x, order, opts);
            const double nll = nll_on_window(f.model, x, window);
            const double bic = 2.0 * nll + d2 * static_cast<double>(order + 1) * log_n;
            scan.selection.bic[order] = bic;
            if (bic < best) {
                best = bic;
                scan.selection.order = order;
            }
            scan.fits.emplace(order, std::move(f));
        } catch (const Error& e) {
            scan.selection.warnings.push_back("order " + std::to_string(order) + " failed: " + e.what());
        }
    }
    if (scan.fits.empty()) throw Error("every candidate model order failed to fit");
    return scan;
}

}  // namespace

OrderSelection select_order_bic(const TimeSeries& x, Method method,
                                std::span<const std::size_t> candidates,
                                const EstimatorOptions& opts) {
    return bic_scan(x, method, candidates, opts).selection;
}

std::vector<double> default_lambda_grid(Eigen::Index samples) {
    const double scale = static_cast<double>(samples) / 2000.0;
    std::vector<double> grid;
    constexpr int count = 12;
    for (int i = 0; i < count; ++i) {
        const double e = -3.0 + 5.0 * static_cast<double>(i) / (count - 1);
        grid.push_back(std::pow(10.0, e) * scale);
    }
    return grid;
}

LambdaSelection select_lambda_cv(const TimeSeries& x, std::size_t order,
                                 std::span<const double> lambda_grid, std::size_t folds,
                                 std::uint64_t /*seed*/, const EstimatorOptions& opts,
                                 bool penalize_diagonal) {
    if (lambda_grid.empty()) throw UsageError("empty lambda grid");
    if (folds < 2) throw UsageError("cross-validation needs at least two folds");
    for (double l : lambda_grid)
        if (!(l >= 0.0)) throw UsageError("lambda values must be nonnegative");
    LambdaSelection out;
    if (lambda_grid.size() == 1) {
        out.lambda = lambda_grid.front();
        out.cv_curve[out.lambda] = std::numeric_limits<double>::quiet_NaN();
        return out;
    }

    const Eigen::Index total = x.samples();
    const Eigen::Index block = total / static_cast<Eigen::Index>(folds);
    const auto min_len = static_cast<Eigen::Index>(order) + 1;
    std::vector<double> sums(lambda_grid.size(), 0.0);
    for (std::size_t k = 0; k < folds; ++k) {
        const Eigen::Index start = static_cast<Eigen::Index>(k) * block;
        const Eigen::Index end = k + 1 == folds ? total : start + block;
        if (end - start < min_len)
            throw PartitionError("fold " + std::to_string(k) + " is shorter than P + 1 samples");
        std::vector<TimeSeries> train;
        if (start >= min_len) train.push_back(x.slice(0, start));
        if (total - end >= min_len) train.push_back(x.slice(end, total - end));
        if (train.empty()) throw PartitionError("no training data left for fold " + std::to_string(k));
        const TimeSeries held = x.slice(start, end - start);
        const double scored = static_cast<double>(end - start - static_cast<Eigen::Index>(order));

        const Fitted csa = fit_csa(train, order, opts);
        for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
            const GroupPenaltySpec pen = penalize_diagonal
                                             ? GroupPenaltySpec::with_diagonal(lambda_grid[i])
                                             : GroupPenaltySpec::off_diagonal(lambda_grid[i]);
            double loss = std::numeric_limits<double>::infinity();
            try {
                const Fitted f = fit_scsa(train, order, pen, opts, csa.model);
                loss = cost_scsa(f.model, held, GroupPenaltySpec{}) / scored;
            } catch (const Error&) {
            }
            sums[i] += loss;
        }
    }
    double best = std::numeric_limits<double>::infinity();
    out.lambda = lambda_grid.front();
    for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
        const double mean = sums[i] / static_cast<double>(folds);
        out.cv_curve[lambda_grid[i]] = mean;
        if (mean < best) {
            best = mean;
            out.lambda = lambda_grid[i];
        }
    }
    return out;
}

void FitRequest::validate() const {
    if (order_candidates.empty()) throw UsageError("order_candidates must not be empty");
    for (double l : lambda_grid)
        if (!(l >= 0.0) || !std::isfinite(l)) throw UsageError("lambda values must be finite and >= 0");
    if (cv_folds < 2) throw UsageError("cv_folds must be at least 2");
}

FitResult run_fit(const TimeSeries& x, const FitRequest& request, const EstimatorOptions& opts) {
    request.validate();
    const auto started = std::chrono::steady_clock::now();
    FitResult result;
    result.method = request.method;

    if (request.method == Method::ICA) {
        Fitted f = fit_ica(x, opts);
        const TimeSeries sources(f.model.demixing * x.data());
        result.selected_order = select_mvar_order_least_squares(sources, request.order_candidates);
        result.posthoc_mvar = fit_mvar_least_squares(sources, result.selected_order).coefficients;
        result.model = std::move(f.model);
        result.trace = std::move(f.trace);
    } else {
        BicScan scan = bic_scan(x, request.method, request.order_candidates, opts);
        result.selected_order = scan.selection.order;
        result.bic_per_order = scan.selection.bic;
        result.warnings = scan.selection.warnings;
        Fitted& base = scan.fits.at(scan.selection.order);

        if (request.method == Method::CSA || request.method == Method::MVARICA) {
            result.model = std::move(base.model);
            result.trace = std::move(base.trace);
        } else {
            const std::vector<double> grid =
                request.lambda_grid.empty() ? default_lambda_grid(x.samples()) : request.lambda_grid;
            const LambdaSelection sel = select_lambda_cv(x, result.selected_order, grid,
                                                         request.cv_folds, request.seed, opts,
                                                         request.penalize_diagonal);
            result.selected_lambda = sel.lambda;
            result.cv_curve = sel.cv_curve;
            const GroupPenaltySpec pen = request.penalize_diagonal
                                             ? GroupPenaltySpec::with_diagonal(sel.lambda)
                                             : GroupPenaltySpec::off_diagonal(sel.lambda);
            const TimeSeries segs[] = {x};
            Fitted f = request.method == Method::SCSA
                           ? fit_scsa(segs, result.selected_order, pen, opts, base.model)
                           : fit_scsa_em(x, result.selected_order, pen, opts, base.model);
            result.model = std::move(f.model);
            result.trace = std::move(f.trace);
        }
    }
    result.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

}  // namespace scsa
