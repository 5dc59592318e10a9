#include "scsa/evaluation.hpp"

#include "scsa/errors.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>

namespace scsa {

double regression_coefficient(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw ShapeError("pattern length mismatch");
    const double bb = b.squaredNorm();
    if (!(bb > 0.0)) throw DegenerateModelError("estimated pattern is zero");
    return a.dot(b) / bb;
}

double pattern_gof(const Vector& a, const Vector& b) {
    const double na = a.norm();
    if (!(na > 0.0)) throw DegenerateModelError("true pattern is zero");
    const double c = regression_coefficient(a, b);
    return (c * b - a).norm() / na;
}

std::vector<Eigen::Index> solve_assignment(const Matrix& cost) {
    // Shortest augmenting path Hungarian method with potentials, O(n^3).
    const Eigen::Index n = cost.rows();
    if (cost.cols() != n) throw ShapeError("assignment cost must be square");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<Eigen::Index> p(n + 1, 0), way(n + 1, 0);
    for (Eigen::Index i = 1; i <= n; ++i) {
        p[0] = i;
        Eigen::Index j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const Eigen::Index i0 = p[j0];
            double delta = inf;
            Eigen::Index j1 = 0;
            for (Eigen::Index j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (Eigen::Index j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const Eigen::Index j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<Eigen::Index> col_of(n);
    for (Eigen::Index j = 1; j <= n; ++j) col_of[p[j] - 1] = j - 1;
    return col_of;
}

Pairing optimal_pairing(const Matrix& true_mixing, const Matrix& est_mixing) {
    if (true_mixing.rows() != est_mixing.rows() || true_mixing.cols() != est_mixing.cols())
        throw ShapeError("true and estimated mixing shapes differ");
    const Eigen::Index n = true_mixing.cols();
    Matrix cost(n, n);  // rows: estimated, cols: true
    for (Eigen::Index f = 0; f < n; ++f)
        for (Eigen::Index d = 0; d < n; ++d)
            cost(f, d) = pattern_gof(true_mixing.col(d), est_mixing.col(f));
    Pairing out;
    out.true_of = solve_assignment(cost);
    out.scale.resize(n);
    for (Eigen::Index f = 0; f < n; ++f) {
        out.total_cost += cost(f, out.true_of[f]);
        out.scale(f) = regression_coefficient(true_mixing.col(out.true_of[f]), est_mixing.col(f));
    }
    return out;
}

double matrix_gof(const Matrix& true_mixing, const Matrix& est_mixing, const Pairing& pairing) {
    const Eigen::Index n = true_mixing.cols();
    if (est_mixing.cols() != n || static_cast<Eigen::Index>(pairing.true_of.size()) != n)
        throw ShapeError("pairing does not match mixing dimensions");
    Matrix adjusted(true_mixing.rows(), n);
    for (Eigen::Index f = 0; f < n; ++f)
        adjusted.col(pairing.true_of[f]) = pairing.scale(f) * est_mixing.col(f);
    return (adjusted - true_mixing).norm() / true_mixing.norm();
}

std::optional<double> mann_whitney_auc(const std::vector<double>& scores,
                                       const std::vector<bool>& labels) {
    if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
    // Rank-sum form with average ranks for ties.
    std::vector<std::size_t> idx(scores.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
    std::vector<double> rank(scores.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        const double r = 0.5 * double(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = r;
        i = j + 1;
    }
    double npos = 0, nneg = 0, rsum = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i]) {
            npos += 1;
            rsum += rank[i];
        } else {
            nneg += 1;
        }
    }
    if (npos == 0 || nneg == 0) return std::nullopt;
    return (rsum - npos * (npos + 1) / 2.0) / (npos * nneg);
}

Matrix aligned_group_scores(const MvarCoefficients& est, const Pairing& pairing) {
    const Eigen::Index n = est.dim();
    if (static_cast<Eigen::Index>(pairing.true_of.size()) != n)
        throw ShapeError("pairing does not match model dimension");
    const Matrix norms = est.group_norms();
    Matrix out = Matrix::Zero(n, n);
    for (Eigen::Index f = 0; f < n; ++f)
        for (Eigen::Index g = 0; g < n; ++g)
            out(pairing.true_of[f], pairing.true_of[g]) =
                norms(f, g) * std::abs(pairing.scale(g) / pairing.scale(f));
    return out;
}

std::optional<double> connectivity_auc(const MvarCoefficients& est, const BoolMatrix& true_support,
                                       const Pairing& pairing) {
    const Matrix aligned = aligned_group_scores(est, pairing);
    if (true_support.rows() != aligned.rows() || true_support.cols() != aligned.cols())
        throw ShapeError("support shape does not match model");
    std::vector<double> scores;
    std::vector<bool> labels;
    for (Eigen::Index d = 0; d < aligned.rows(); ++d)
        for (Eigen::Index e = 0; e < aligned.cols(); ++e)
            if (d != e) {
                scores.push_back(aligned(d, e));
                labels.push_back(true_support(d, e));
            }
    return mann_whitney_auc(scores, labels);
}

EvalReport evaluate(const Dataset& truth, const SourceModel& est,
                    const std::optional<MvarCoefficients>& lagged) {
    est.validate();
    const Matrix& m = truth.true_mixing.matrix();
    if (est.dim() != m.rows()) throw ShapeError("model dimension differs from the dataset");
    const Matrix est_mixing = est.demixing.inverse();
    EvalReport r;
    const Pairing pairing = optimal_pairing(m, est_mixing);
    r.true_of = pairing.true_of;
    r.gof_error = matrix_gof(m, est_mixing, pairing);
    r.per_pattern_gof.resize(m.cols());
    for (Eigen::Index f = 0; f < m.cols(); ++f)
        r.per_pattern_gof(pairing.true_of[f]) =
            pattern_gof(m.col(pairing.true_of[f]), est_mixing.col(f));
    const MvarCoefficients& h = lagged ? *lagged : est.mvar;
    if (h.order() > 0) r.auc = connectivity_auc(h, truth.true_support, pairing);
    return r;
}

}  // namespace scsa
