#include "scsa/em_dal.hpp"

#include "scsa/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace scsa {

std::vector<double> DalConfig::geometric_schedule(double eta0, double factor, std::size_t count) {
    std::vector<double> out;
    double eta = eta0;
    for (std::size_t k = 0; k < count; ++k, eta *= factor) out.push_back(eta);
    return out;
}

void DalConfig::validate() const {
    if (eta_schedule.empty()) throw UsageError("empty eta schedule");
    for (std::size_t k = 0; k < eta_schedule.size(); ++k) {
        if (!(eta_schedule[k] > 0.0)) throw UsageError("eta values must be positive");
        if (k > 0 && !(eta_schedule[k] > eta_schedule[k - 1]))
            throw UsageError("eta schedule must be strictly increasing");
    }
    if (!(inner_newton_tol > 0.0) || !(kkt_tol > 0.0)) throw UsageError("tolerances must be positive");
}

DualVariables::DualVariables(Matrix a) : a_(std::move(a)) {
    for (Eigen::Index i = 0; i < a_.size(); ++i)
        if (!(std::abs(a_.data()[i]) < 1.0))
            throw NumericError("dual variable outside (-1, 1)");
}

namespace {

const double kLogPi = std::log(std::numbers::pi);
const double kLog2OverPi = std::log(2.0 / std::numbers::pi);

double log_cosh(double e) {
    const double a = std::abs(e);
    return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

double clamp_dual(double a) {
    constexpr double lim = 1.0 - kDualClamp;
    return std::clamp(a, -lim, lim);
}

double conjugate_entry(double a, double s) {
    return xlogx((1.0 - a) / 2.0) + xlogx((1.0 + a) / 2.0) + a * s + kLog2OverPi;
}

void require_same_shape(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("matrix shapes differ");
}

// min_W sum_{d,t} -log((1/pi) sech((W Z)_dt - Y_dt)) + sum_G weight_G ||W_G||
// with W = [H(1) .. H(P)] (D x DP), Z the stacked lagged sources.
struct Group {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> coords;  // (row, col) in W
    double weight = 0.0;
};

struct MStepProblem {
    Eigen::Index dim = 0;
    Eigen::Index order = 0;
    Eigen::Index n = 0;
    Matrix z;  // (D P) x n
    Matrix y;  // D x n
    std::vector<Group> groups;

    MStepProblem(const TimeSeries& sources, std::size_t p, const GroupPenaltySpec& pen) {
        pen.validate();
        dim = sources.channels();
        order = static_cast<Eigen::Index>(p);
        n = sources.samples() - order;
        if (n <= 0) throw InsufficientDataError("too few samples for the M-step order");
        const auto& s = sources.data();
        y = s.middleCols(order, n);
        z.resize(dim * order, n);
        for (Eigen::Index k = 1; k <= order; ++k)
            z.middleRows((k - 1) * dim, dim) = s.middleCols(order - k, n);
        for (Eigen::Index d = 0; d < dim; ++d) {
            for (Eigen::Index f = 0; f < dim; ++f) {
                if (d == f && pen.penalize_diagonal) continue;
                Group g;
                g.weight = d == f ? 0.0 : pen.lambda;
                for (Eigen::Index k = 0; k < order; ++k) g.coords.emplace_back(d, k * dim + f);
                groups.push_back(std::move(g));
            }
        }
        if (pen.penalize_diagonal) {
            Group g;
            g.weight = pen.lambda_diag;
            for (Eigen::Index k = 0; k < order; ++k)
                for (Eigen::Index d = 0; d < dim; ++d) g.coords.emplace_back(d, k * dim + d);
            groups.push_back(std::move(g));
        }
    }

    Eigen::Index width() const { return dim * order; }

    static double norm(const Matrix& w, const Group& g) {
        double sq = 0.0;
        for (auto [r, c] : g.coords) sq += w(r, c) * w(r, c);
        return std::sqrt(sq);
    }

    double loss(const Matrix& w) const {
        const Matrix r = w * z - y;
        double acc = 0.0;
        for (Eigen::Index i = 0; i < r.size(); ++i) acc += log_cosh(r.data()[i]);
        return acc + kLogPi * static_cast<double>(r.size());
    }

    double penalty(const Matrix& w) const {
        double acc = 0.0;
        for (const auto& g : groups)
            if (g.weight > 0.0) acc += g.weight * norm(w, g);
        return acc;
    }

    Matrix data_gradient(const Matrix& w) const {
        return (w * z - y).array().tanh().matrix() * z.transpose();
    }

    // Group soft-thresholding with threshold eta * weight.
    Matrix prox(const Matrix& v, double eta) const {
        Matrix out = v;
        for (const auto& g : groups) {
            if (g.weight <= 0.0) continue;
            const double nv = norm(v, g);
            const double scale = nv > eta * g.weight ? 1.0 - eta * g.weight / nv : 0.0;
            for (auto [r, c] : g.coords) out(r, c) = v(r, c) * scale;
        }
        return out;
    }

    KktReport kkt(const Matrix& w) const {
        const Matrix grad = data_gradient(w);
        KktReport rep;
        for (const auto& g : groups) {
            const double nw = norm(w, g);
            double sq = 0.0;
            if (g.weight > 0.0 && nw == 0.0) {
                for (auto [r, c] : g.coords) sq += grad(r, c) * grad(r, c);
                rep.zero_group_ratio = std::max(rep.zero_group_ratio, std::sqrt(sq) / g.weight);
                continue;
            }
            for (auto [r, c] : g.coords) {
                const double pen = g.weight > 0.0 ? g.weight * w(r, c) / nw : 0.0;
                sq += (grad(r, c) + pen) * (grad(r, c) + pen);
            }
            rep.stationarity = std::max(rep.stationarity, std::sqrt(sq));
        }
        return rep;
    }

    Matrix to_matrix(const MvarCoefficients& h) const {
        Matrix w = Matrix::Zero(dim, width());
        if (h.order() == 0) return w;
        if (h.dim() != dim || static_cast<Eigen::Index>(h.order()) != order)
            throw ShapeError("initial MVAR coefficients do not match the M-step problem");
        for (Eigen::Index k = 0; k < order; ++k)
            w.middleCols(k * dim, dim) = h.lag(static_cast<std::size_t>(k + 1));
        return w;
    }

    MvarCoefficients to_mvar(const Matrix& w) const {
        std::vector<Matrix> lags;
        for (Eigen::Index k = 0; k < order; ++k) lags.push_back(w.middleCols(k * dim, dim));
        return MvarCoefficients(dim, std::move(lags));
    }
};

// Inner dual objective phi(a) = f*(a) + ||prox(w - eta a Z^T)||^2 / (2 eta).
struct DualObjective {
    const MStepProblem& prob;
    const Matrix& w;
    double eta;

    double value(const Matrix& a, Matrix* st = nullptr) const {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < a.size(); ++i) acc += conjugate_entry(a.data()[i], prob.y.data()[i]);
        Matrix p = prob.prox(w - eta * a * prob.z.transpose(), eta);
        acc += p.squaredNorm() / (2.0 * eta);
        if (st) *st = std::move(p);
        return acc;
    }

    Matrix gradient(const Matrix& a, const Matrix& st) const {
        Matrix g = a.unaryExpr([](double v) { return std::atanh(v); }) + prob.y;
        g.noalias() -= st * prob.z;
        return g;
    }

    // Newton direction via Woodbury on diag(Lambda) + eta U J U^T.
    Matrix newton_direction(const Matrix& a, const Matrix& grad, const Matrix& v) const {
        const Eigen::Index dim = prob.dim;
        const Eigen::Index n = prob.n;
        const Matrix inv_lambda = (1.0 - a.array().square()).matrix();  // 1 / Hessian diag
        const Matrix rhs = -grad;
        const Matrix base = inv_lambda.cwiseProduct(rhs);

        // Active coordinates and the inverse of C = eta J, block by block.
        std::vector<std::pair<Eigen::Index, Eigen::Index>> coords;
        std::vector<std::pair<std::size_t, std::size_t>> blocks;  // [start, end) into coords
        std::vector<double> block_c;                               // c = eta w / ||v_G||
        std::vector<Vector> block_u;
        for (const auto& g : prob.groups) {
            double c = 0.0;
            Vector u;
            if (g.weight > 0.0) {
                const double nv = MStepProblem::norm(v, g);
                if (nv <= eta * g.weight) continue;
                c = eta * g.weight / nv;
                u.resize(static_cast<Eigen::Index>(g.coords.size()));
                for (std::size_t k = 0; k < g.coords.size(); ++k)
                    u(static_cast<Eigen::Index>(k)) = v(g.coords[k].first, g.coords[k].second) / nv;
            }
            const std::size_t start = coords.size();
            coords.insert(coords.end(), g.coords.begin(), g.coords.end());
            blocks.emplace_back(start, coords.size());
            block_c.push_back(c);
            block_u.push_back(std::move(u));
        }
        const auto k_total = static_cast<Eigen::Index>(coords.size());
        if (k_total == 0) return base;

        Matrix s = Matrix::Zero(k_total, k_total);
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const auto [start, end] = blocks[b];
            const auto len = static_cast<Eigen::Index>(end - start);
            const auto off = static_cast<Eigen::Index>(start);
            const double c = block_c[b];
            if (c == 0.0) {
                s.block(off, off, len, len).diagonal().array() += 1.0 / eta;
            } else {
                const Vector& u = block_u[b];
                Matrix jinv = -c * u * u.transpose();
                jinv.diagonal().array() += 1.0;
                s.block(off, off, len, len) += jinv / (eta * (1.0 - c));
            }
        }
        // U^T Lambda^-1 U couples only coordinates within one row of W.
        std::vector<std::vector<Eigen::Index>> by_row(static_cast<std::size_t>(dim));
        for (Eigen::Index k = 0; k < k_total; ++k)
            by_row[static_cast<std::size_t>(coords[static_cast<std::size_t>(k)].first)].push_back(k);
        for (Eigen::Index d = 0; d < dim; ++d) {
            const auto& ks = by_row[static_cast<std::size_t>(d)];
            if (ks.empty()) continue;
            const auto m = static_cast<Eigen::Index>(ks.size());
            Matrix za(m, n);
            for (Eigen::Index i = 0; i < m; ++i)
                za.row(i) = prob.z.row(coords[static_cast<std::size_t>(ks[static_cast<std::size_t>(i)])].second);
            const Matrix scaled = za * inv_lambda.row(d).asDiagonal();
            const Matrix gram = scaled * za.transpose();
            for (Eigen::Index i = 0; i < m; ++i)
                for (Eigen::Index j = 0; j < m; ++j)
                    s(ks[static_cast<std::size_t>(i)], ks[static_cast<std::size_t>(j)]) += gram(i, j);
        }
        // base - Lambda^-1 U S^-1 U^T base
        const Matrix ut_full = base * prob.z.transpose();  // D x DP
        Vector ut(k_total);
        for (Eigen::Index k = 0; k < k_total; ++k) {
            const auto [r, c] = coords[static_cast<std::size_t>(k)];
            ut(k) = ut_full(r, c);
        }
        const Eigen::LDLT<Matrix> ldlt(s);
        if (ldlt.info() != Eigen::Success) throw DalError("Newton system factorization failed");
        const Vector q = ldlt.solve(ut);
        Matrix qw = Matrix::Zero(dim, prob.width());
        for (Eigen::Index k = 0; k < k_total; ++k) {
            const auto [r, c] = coords[static_cast<std::size_t>(k)];
            qw(r, c) = q(k);
        }
        return base - inv_lambda.cwiseProduct(qw * prob.z);
    }
};

// Largest step in (0, 1] keeping a + step * d inside the clamp box, with margin.
double max_feasible_step(const Matrix& a, const Matrix& d) {
    constexpr double lim = 1.0 - kDualClamp;
    double step = 1.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double di = d.data()[i];
        if (di == 0.0) continue;
        const double room = di > 0.0 ? lim - a.data()[i] : a.data()[i] + lim;
        step = std::min(step, 0.99 * room / std::abs(di));
    }
    return step;
}

MStepResult finish(const MStepProblem& prob, const Matrix& w, std::size_t outer,
                   std::size_t newton, double kkt_tol) {
    MStepResult r{prob.to_mvar(w), prob.loss(w) + prob.penalty(w), outer, newton, prob.kkt(w), false};
    r.converged = r.kkt.satisfied(kkt_tol);
    return r;
}

}  // namespace

double m_loss(const Matrix& s_tilde, const Matrix& s) {
    require_same_shape(s_tilde, s);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) acc += log_cosh(s_tilde.data()[i] - s.data()[i]);
    return acc + kLogPi * static_cast<double>(s.size());
}

double m_loss_conjugate(const DualVariables& a, const Matrix& s) {
    require_same_shape(a.values(), s);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        acc += conjugate_entry(clamp_dual(a.values().data()[i]), s.data()[i]);
    return acc;
}

ConjugateDerivatives m_loss_conjugate_grad_hess(const DualVariables& a, const Matrix& s) {
    require_same_shape(a.values(), s);
    const Matrix ac = a.values().unaryExpr([](double v) { return clamp_dual(v); });
    ConjugateDerivatives out;
    out.gradient = ac.unaryExpr([](double v) { return std::atanh(v); }) + s;
    out.hessian = ac.unaryExpr([](double v) { return 1.0 / (1.0 - v * v); });
    return out;
}

KktReport m_step_kkt(const TimeSeries& sources, const MvarCoefficients& h,
                     const GroupPenaltySpec& pen) {
    const MStepProblem prob(sources, h.order(), pen);
    return prob.kkt(prob.to_matrix(h));
}

double m_step_objective(const TimeSeries& sources, const MvarCoefficients& h,
                        const GroupPenaltySpec& pen) {
    const MStepProblem prob(sources, h.order(), pen);
    const Matrix w = prob.to_matrix(h);
    return prob.loss(w) + prob.penalty(w);
}

MStepResult solve_m_step_dal(const TimeSeries& sources, std::size_t order,
                             const GroupPenaltySpec& pen, const MvarCoefficients& h0,
                             const DalConfig& cfg) {
    cfg.validate();
    const MStepProblem prob(sources, order, pen);
    Matrix w = prob.to_matrix(h0);
    if (order == 0) return finish(prob, w, 0, 0, cfg.kkt_tol);

    Matrix a = (w * prob.z - prob.y).array().tanh().matrix().unaryExpr(
        [](double v) { return clamp_dual(v); });
    std::size_t newton_total = 0;
    std::size_t outer = 0;
    for (; outer < cfg.max_outer; ++outer) {
        if (prob.kkt(w).satisfied(cfg.kkt_tol)) break;
        const double eta = cfg.eta_schedule[std::min(outer, cfg.eta_schedule.size() - 1)];
        const DualObjective phi{prob, w, eta};

        Matrix st;
        double val = phi.value(a, &st);
        Matrix grad = phi.gradient(a, st);
        // Measured in r = atanh(a): entries near |a| = 1 amplify roundoff in a.
        const auto scaled_norm = [](const Matrix& g, const Matrix& av) {
            return (g.array() * (1.0 - av.array().square())).matrix().lpNorm<Eigen::Infinity>();
        };
        double scaled = scaled_norm(grad, a);
        for (std::size_t it = 0; it < cfg.max_inner; ++it) {
            if (scaled <= cfg.inner_newton_tol) break;
            const Matrix v = w - eta * a * prob.z.transpose();
            const Matrix d = phi.newton_direction(a, grad, v);
            const double slope = (grad.array() * d.array()).sum();
            if (!(slope < 0.0)) throw DalError("Newton direction is not a descent direction");
            // Below this the dual value cannot resolve the decrease; judge the
            // step by the gradient instead.
            const bool value_blind = -slope <= 1e-9 * std::max(1.0, std::abs(val));
            double step = max_feasible_step(a, d);
            bool accepted = false;
            for (int bt = 0; bt < 60; ++bt, step *= 0.5) {
                const Matrix trial = a + step * d;
                Matrix st_trial;
                const double v_trial = phi.value(trial, &st_trial);
                const bool armijo = v_trial <= val + 1e-4 * step * slope;
                Matrix g_trial;
                double s_trial = 0.0;
                if (!armijo) {
                    if (!value_blind) continue;
                    g_trial = phi.gradient(trial, st_trial);
                    s_trial = scaled_norm(g_trial, trial);
                    if (!(s_trial < scaled)) continue;
                } else {
                    g_trial = phi.gradient(trial, st_trial);
                    s_trial = scaled_norm(g_trial, trial);
                }
                a = trial;
                val = v_trial;
                st = std::move(st_trial);
                grad = std::move(g_trial);
                scaled = s_trial;
                accepted = true;
                break;
            }
            ++newton_total;
            if (!accepted) {
                if (value_blind) break;  // roundoff floor reached
                throw DalError("DAL inner Newton line search failed");
            }
        }
        w = prob.prox(w - eta * a * prob.z.transpose(), eta);
    }
    return finish(prob, w, outer, newton_total, cfg.kkt_tol);
}

MStepResult solve_m_step_proximal_gradient(const TimeSeries& sources, std::size_t order,
                                           const GroupPenaltySpec& pen,
                                           const MvarCoefficients& h0, std::size_t max_iters,
                                           double kkt_tol) {
    const MStepProblem prob(sources, order, pen);
    Matrix w = prob.to_matrix(h0);
    if (order == 0) return finish(prob, w, 0, 0, kkt_tol);
    // The sech loss has curvature at most 1 per residual.
    const double lipschitz =
        Eigen::SelfAdjointEigenSolver<Matrix>(prob.z * prob.z.transpose(), Eigen::EigenvaluesOnly)
            .eigenvalues()
            .maxCoeff();
    const double step = 1.0 / lipschitz;
    Matrix momentum = w;
    double t = 1.0;
    double prev = prob.loss(w) + prob.penalty(w);
    std::size_t it = 0;
    for (; it < max_iters; ++it) {
        if (prob.kkt(w).satisfied(kkt_tol)) break;
        Matrix next = prob.prox(momentum - step * prob.data_gradient(momentum), step);
        const double val = prob.loss(next) + prob.penalty(next);
        if (val > prev) {
            // Restart momentum.
            t = 1.0;
            next = prob.prox(w - step * prob.data_gradient(w), step);
            momentum = next;
            w = std::move(next);
            prev = prob.loss(w) + prob.penalty(w);
            continue;
        }
        const double t_next = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
        momentum = next + ((t - 1.0) / t_next) * (next - w);
        w = std::move(next);
        t = t_next;
        prev = val;
    }
    return finish(prob, w, it, 0, kkt_tol);
}

MvarCoefficients m_step_dal(const TimeSeries& sources, std::size_t order,
                            const GroupPenaltySpec& pen, const MvarCoefficients& h0,
                            const DalConfig& cfg) {
    try {
        return solve_m_step_dal(sources, order, pen, h0, cfg).h;
    } catch (const DalError&) {
        return solve_m_step_proximal_gradient(sources, order, pen, h0, 20000, cfg.kkt_tol).h;
    }
}

Matrix e_step(const TimeSeries& x, const MvarCoefficients& h, const Matrix& b0,
              const OptimizerConfig& cfg) {
    if (!is_invertible(b0)) throw DegenerateModelError("initial demixing matrix is singular");
    const auto dim = b0.rows();
    const TimeSeries segs[] = {x};
    const GroupPenaltySpec no_penalty{};
    const Objective objective = [&](const Vector& v, Vector* grad) {
        const Matrix b = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                        Eigen::RowMajor>>(v.data(), dim, dim);
        const ScsaTerms terms = evaluate_scsa_terms(b, h.lags(), segs, no_penalty,
                                                    kDefaultTruncationThreshold, grad != nullptr);
        const double value = terms.data + terms.log_det;
        if (!std::isfinite(value)) return std::numeric_limits<double>::infinity();
        if (grad) {
            grad->resize(dim * dim);
            Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                grad->data(), dim, dim) = terms.grad_b;
        }
        return value;
    };
    Vector v0(dim * dim);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v0.data(), dim,
                                                                                      dim) = b0;
    const OptimizationResult res = minimize(objective, v0, cfg);
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        res.x.data(), dim, dim);
}

EmResult refine_scsa_em(const TimeSeries& x, const SourceModel& warm_start,
                        const GroupPenaltySpec& pen, std::size_t em_steps,
                        const OptimizerConfig& opt_cfg, const DalConfig& dal_cfg, double rel_tol) {
    warm_start.validate();
    const TimeSeries segs[] = {x};
    const auto composite = [&](const Matrix& b, const MvarCoefficients& h) {
        return evaluate_scsa_terms(b, h.lags(), segs, pen, kDefaultTruncationThreshold, false).total();
    };
    EmResult out{warm_start, {}, 0};
    double cost = composite(out.model.demixing, out.model.mvar);
    out.cost_history.push_back(cost);
    const std::size_t order = warm_start.order();
    for (std::size_t step = 0; step < em_steps; ++step) {
        const double round_start = cost;

        Matrix b = e_step(x, out.model.mvar, out.model.demixing, opt_cfg);
        if (is_invertible(b)) {
            const double c = composite(b, out.model.mvar);
            if (c <= cost) {
                out.model.demixing = std::move(b);
                cost = c;
            }
        }
        out.cost_history.push_back(cost);

        if (order > 0) {
            const TimeSeries sources(out.model.demixing * x.data());
            MvarCoefficients h = m_step_dal(sources, order, pen, out.model.mvar, dal_cfg);
            const double c = composite(out.model.demixing, h);
            if (c <= cost) {
                out.model.mvar = std::move(h);
                cost = c;
            }
        }
        out.cost_history.push_back(cost);
        ++out.steps;
        if (std::abs(round_start - cost) <= rel_tol * std::max(1.0, std::abs(cost))) break;
    }
    return out;
}

}  // namespace scsa
