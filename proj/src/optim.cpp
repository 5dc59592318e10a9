#include "scsa/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace scsa {

void OptimizerConfig::validate() const {
    if (memory < 1) throw UsageError("L-BFGS memory must be at least 1");
    if (!(grad_tol > 0.0)) throw UsageError("gradient tolerance must be positive");
    if (value_tol < 0.0) throw UsageError("value tolerance must be nonnegative");
    if (!(truncation_threshold > 0.0)) throw UsageError("truncation threshold must be positive");
    if (!(line_search.sufficient_decrease > 0.0 && line_search.sufficient_decrease < 1.0) ||
        !(line_search.contraction > 0.0 && line_search.contraction < 1.0))
        throw UsageError("line-search constants must lie in (0, 1)");
}

double OptimizerConfig::effective_grad_tol(double f) const {
    return relative_grad_tol ? grad_tol * std::max(1.0, std::abs(f)) : grad_tol;
}

const char* to_string(StopReason r) {
    switch (r) {
        case StopReason::GradientTolerance: return "gradient_tolerance";
        case StopReason::ValueTolerance: return "value_tolerance";
        case StopReason::PrecisionLimit: return "precision_limit";
        case StopReason::MaxIterations: return "max_iterations";
    }
    return "unknown";
}

Vector min_norm_subgradient(const Vector& g, double weight) {
    const double n = g.norm();
    if (n <= weight) return Vector::Zero(g.size());
    return g * (1.0 - weight / n);
}

namespace {

struct CurvaturePair {
    Vector s, y;
    double rho;
};

Vector two_loop(const std::deque<CurvaturePair>& mem, const Vector& g) {
    Vector q = g;
    std::vector<double> alpha(mem.size());
    for (std::size_t i = mem.size(); i-- > 0;) {
        alpha[i] = mem[i].rho * mem[i].s.dot(q);
        q -= alpha[i] * mem[i].y;
    }
    if (!mem.empty()) {
        const auto& last = mem.back();
        q *= last.s.dot(last.y) / last.y.squaredNorm();
    }
    for (std::size_t i = 0; i < mem.size(); ++i) {
        const double beta = mem[i].rho * mem[i].y.dot(q);
        q += (alpha[i] - beta) * mem[i].s;
    }
    return -q;
}

double group_norm(const Vector& x, const ParameterGroup& g) {
    double sq = 0.0;
    for (auto i : g.indices) sq += x(i) * x(i);
    return std::sqrt(sq);
}

bool group_is_zero(const Vector& x, const ParameterGroup& g) {
    return std::all_of(g.indices.begin(), g.indices.end(), [&](auto i) { return x(i) == 0.0; });
}

void set_group(Vector& x, const ParameterGroup& g, double v) {
    for (auto i : g.indices) x(i) = v;
}

class Minimizer {
public:
    Minimizer(const Objective& obj, std::span<const ParameterGroup> groups,
              const OptimizerConfig& cfg)
        : obj_(obj), groups_(groups), cfg_(cfg), dwell_(groups.size(), 0) {}

    OptimizationResult run(Vector x) {
        cfg_.validate();
        truncate(x);
        Vector g;
        double f = eval(x, &g);
        if (!std::isfinite(f)) throw NumericError("objective is not finite at the starting point");

        trace_.value_history.push_back(f);
        std::size_t flat_count = 0;
        Vector pg = pseudo_gradient(x, g);

        for (;;) {
            const double gnorm = pg.lpNorm<Eigen::Infinity>();
            trace_.final_value = f;
            trace_.final_grad_norm = gnorm;
            if (gnorm <= cfg_.effective_grad_tol(f)) {
                finish(StopReason::GradientTolerance);
                break;
            }
            if (trace_.iterations >= cfg_.max_iters) {
                finish(StopReason::MaxIterations);
                break;
            }

            Vector x_new, g_new;
            double f_new = 0.0;
            if (!line_search(x, f, pg, x_new, f_new, g_new)) {
                // Retry once along steepest descent before giving up.
                memory_.clear();
                if (!line_search(x, f, pg, x_new, f_new, g_new)) {
                    finish(StopReason::PrecisionLimit);
                    break;
                }
            }

            update_dwell(x, x_new);
            const Vector s = x_new - x;
            const Vector y = g_new - g;
            const double sy = s.dot(y);
            if (sy > 1e-10 * s.norm() * y.norm() && sy > 0.0) {
                memory_.push_back({s, y, 1.0 / sy});
                if (memory_.size() > cfg_.memory) memory_.pop_front();
            }

            const double change = std::abs(f - f_new);
            x = std::move(x_new);
            g = std::move(g_new);
            f = f_new;
            pg = pseudo_gradient(x, g);
            ++trace_.iterations;
            trace_.value_history.push_back(f);

            if (cfg_.value_tol > 0.0 && change <= cfg_.value_tol * std::max(1.0, std::abs(f))) {
                if (++flat_count >= cfg_.value_tol_window) {
                    trace_.final_value = f;
                    trace_.final_grad_norm = pg.lpNorm<Eigen::Infinity>();
                    finish(StopReason::ValueTolerance);
                    break;
                }
            } else {
                flat_count = 0;
            }
        }
        return {std::move(x), std::move(trace_)};
    }

private:
    double eval(const Vector& x, Vector* g) {
        ++trace_.evaluations;
        return obj_(x, g);
    }

    void finish(StopReason r) {
        trace_.reason = r;
        trace_.converged = r == StopReason::GradientTolerance || r == StopReason::ValueTolerance;
    }

    // Zero penalized groups whose norm fell below the threshold.
    void truncate(Vector& x) const {
        for (const auto& grp : groups_)
            if (grp.weight > 0.0 && !group_is_zero(x, grp) &&
                group_norm(x, grp) < cfg_.truncation_threshold)
                set_group(x, grp, 0.0);
    }

    Vector pseudo_gradient(const Vector& x, const Vector& g) const {
        Vector pg = g;
        for (const auto& grp : groups_) {
            if (grp.weight <= 0.0 || !group_is_zero(x, grp)) continue;
            Vector gg(static_cast<Eigen::Index>(grp.indices.size()));
            for (std::size_t k = 0; k < grp.indices.size(); ++k) gg(static_cast<Eigen::Index>(k)) = g(grp.indices[k]);
            const Vector sub = min_norm_subgradient(gg, grp.weight);
            for (std::size_t k = 0; k < grp.indices.size(); ++k) pg(grp.indices[k]) = sub(static_cast<Eigen::Index>(k));
        }
        return pg;
    }

    // Direction restricted so that zeroed groups only leave zero along their
    // minimum-norm subgradient and pinned groups stay put.
    Vector direction(const Vector& x, const Vector& pg) {
        Vector d = two_loop(memory_, pg);
        constrain(x, pg, d);
        if (!(d.dot(pg) < 0.0)) {
            memory_.clear();
            d = -pg;
            constrain(x, pg, d);
        }
        if (d.squaredNorm() == 0.0 &&
            std::any_of(dwell_.begin(), dwell_.end(), [](auto k) { return k > 0; })) {
            // Only pinned groups could still move; release them.
            std::fill(dwell_.begin(), dwell_.end(), 0);
            memory_.clear();
            d = -pg;
            constrain(x, pg, d);
        }
        return d;
    }

    void constrain(const Vector& x, const Vector& pg, Vector& d) const {
        for (std::size_t k = 0; k < groups_.size(); ++k) {
            const auto& grp = groups_[k];
            if (grp.weight <= 0.0 || !group_is_zero(x, grp)) continue;
            double dot = 0.0, pgn = 0.0;
            for (auto i : grp.indices) {
                dot += d(i) * pg(i);
                pgn += pg(i) * pg(i);
            }
            if (dwell_[k] > 0 || pgn == 0.0) {
                set_group(d, grp, 0.0);
            } else if (dot >= 0.0) {
                for (auto i : grp.indices) d(i) = -pg(i);
            }
        }
    }

    bool line_search(const Vector& x, double f, const Vector& pg, Vector& x_new,
                     double& f_new, Vector& g_new) {
        const Vector d = direction(x, pg);
        if (d.squaredNorm() == 0.0) return false;
        const double slope = d.dot(pg);
        double step = memory_.empty() ? std::min(1.0, 1.0 / d.norm()) : 1.0;
        const double noise = 10.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f));
        bool saw_finite = false;
        for (std::size_t k = 0; k < cfg_.line_search.max_backtracks; ++k) {
            if (step * std::abs(slope) < noise && saw_finite) return false;
            x_new = x + step * d;
            // Groups that pass through the origin land on it.
            for (const auto& grp : groups_) {
                if (grp.weight <= 0.0 || group_is_zero(x, grp)) continue;
                double dot = 0.0;
                for (auto i : grp.indices) dot += x(i) * x_new(i);
                if (dot <= 0.0) set_group(x_new, grp, 0.0);
            }
            truncate(x_new);
            f_new = eval(x_new, nullptr);
            if (std::isfinite(f_new)) {
                saw_finite = true;
                const double decrease = std::min(pg.dot(x_new - x), 0.0);
                if (f_new <= f + cfg_.line_search.sufficient_decrease * decrease &&
                    (f_new < f || decrease == 0.0)) {
                    f_new = eval(x_new, &g_new);
                    return std::isfinite(f_new);
                }
            }
            step *= cfg_.line_search.contraction;
        }
        if (!saw_finite)
            throw StagnationError("line search found no finite objective value", x, trace_);
        return false;
    }

    void update_dwell(const Vector& x_old, const Vector& x_new) {
        for (std::size_t k = 0; k < groups_.size(); ++k) {
            if (dwell_[k] > 0) --dwell_[k];
            if (groups_[k].weight > 0.0 && !group_is_zero(x_old, groups_[k]) &&
                group_is_zero(x_new, groups_[k]))
                dwell_[k] = cfg_.zero_dwell;
        }
    }

    const Objective& obj_;
    std::span<const ParameterGroup> groups_;
    const OptimizerConfig& cfg_;
    std::vector<std::size_t> dwell_;
    std::deque<CurvaturePair> memory_;
    OptimizationTrace trace_;
};

}  // namespace

OptimizationResult minimize(const Objective& objective, Vector x0, const OptimizerConfig& cfg) {
    return Minimizer(objective, {}, cfg).run(std::move(x0));
}

OptimizationResult minimize_with_group_truncation(const Objective& objective, Vector x0,
                                                  std::span<const ParameterGroup> groups,
                                                  const OptimizerConfig& cfg) {
    return Minimizer(objective, groups, cfg).run(std::move(x0));
}

}  // namespace scsa
