#include "oracles.hpp"

#include "scsa/cost.hpp"
#include "scsa/em_dal.hpp"
#include "scsa/errors.hpp"
#include "scsa/estimators.hpp"
#include "scsa/model.hpp"

#include <doctest.h>

#include <numbers>

using namespace scsa;

namespace {

TimeSeries sparse_sources(std::uint64_t seed, Eigen::Index t = 1500) {
    MvarCoefficients h(3, {Matrix{{0.5, 0.4, 0.0}, {0.0, 0.4, 0.0}, {0.0, 0.0, -0.3}},
                           Matrix{{-0.2, 0.2, 0.0}, {0.0, 0.1, 0.0}, {0.0, 0.0, 0.2}}});
    return simulate_sources(h, t, sech_sampler(), seed).sources;
}

}  // namespace

TEST_CASE("config and dual variable validation") {
    DalConfig c;
    c.eta_schedule = {1.0, 1.0};
    CHECK_THROWS_AS(c.validate(), UsageError);
    c.eta_schedule = {};
    CHECK_THROWS_AS(c.validate(), UsageError);
    c.eta_schedule = {-1.0, 2.0};
    CHECK_THROWS_AS(c.validate(), UsageError);
    CHECK_THROWS(DualVariables(Matrix::Constant(1, 1, 1.0)));
    CHECK_NOTHROW(DualVariables(Matrix::Constant(1, 1, 0.999)));
    const auto s = DalConfig::geometric_schedule(1.0, 4.0, 3);
    CHECK(s == std::vector<double>{1.0, 4.0, 16.0});
}

TEST_CASE("m-step loss values") {
    const Matrix s = Matrix::Constant(2, 3, 0.7);
    CHECK(m_loss(s, s) == doctest::Approx(6.0 * std::log(std::numbers::pi)));
    CHECK(m_loss(Matrix::Constant(1, 1, 1.0), Matrix::Zero(1, 1)) ==
          doctest::Approx(std::log(std::numbers::pi) + std::log(std::cosh(1.0))).epsilon(1e-14));
    CHECK_THROWS_AS(m_loss(Matrix::Zero(1, 2), Matrix::Zero(2, 1)), ShapeError);
}

TEST_CASE("m-step loss equals the data term of the scsa cost") {
    std::mt19937_64 rng(2);
    const Matrix b = oracle::well_conditioned(rng, 2);
    const MvarCoefficients h(2, oracle::random_lags(rng, 2, 2, 0.3));
    const Matrix x = oracle::randn(rng, 2, 30);
    const Matrix s = b * x;
    Matrix pred = Matrix::Zero(2, 28);
    for (int p = 1; p <= 2; ++p) pred += h.lag(p) * s.middleCols(2 - p, 28);
    const double det = 28.0 * std::log(std::abs(b.determinant()));
    CHECK(m_loss(pred, s.rightCols(28)) - det ==
          doctest::Approx(cost_scsa(SourceModel{b, h}, TimeSeries(x), GroupPenaltySpec{})).epsilon(1e-13));
}

TEST_CASE("conjugate loss at a = 0 is -log pi per entry and symmetric at s = 0") {
    CHECK(m_loss_conjugate(DualVariables(Matrix::Zero(2, 2)), Matrix::Zero(2, 2)) ==
          doctest::Approx(-4.0 * std::log(std::numbers::pi)));
    for (double a : {0.1, 0.5, 0.9})
        CHECK(m_loss_conjugate(DualVariables(Matrix::Constant(1, 1, a)), Matrix::Zero(1, 1)) ==
              doctest::Approx(m_loss_conjugate(DualVariables(Matrix::Constant(1, 1, -a)), Matrix::Zero(1, 1))));
}

TEST_CASE("conjugate loss matches a numerical Legendre transform") {
    for (double a : {-0.9, -0.5, 0.0, 0.5, 0.9})
        for (double s : {-2.0, 0.0, 3.0}) {
            const double closed = m_loss_conjugate(DualVariables(Matrix::Constant(1, 1, a)), Matrix::Constant(1, 1, s));
            CHECK(std::abs(closed - oracle::legendre_numeric(a, s)) < 1e-8);
        }
}

TEST_CASE("conjugate gradient and hessian match finite differences") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> unif(-0.95, 0.95);
    Matrix a(3, 4), s = oracle::randn(rng, 3, 4);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = unif(rng);
    const auto dh = m_loss_conjugate_grad_hess(DualVariables(a), s);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        Matrix ap = a, am = a;
        ap.data()[i] += h;
        am.data()[i] -= h;
        const double fd = (m_loss_conjugate(DualVariables(ap), s) - m_loss_conjugate(DualVariables(am), s)) / (2 * h);
        CHECK(std::abs(fd - dh.gradient.data()[i]) <= 1e-6 * std::max(1.0, std::abs(fd)));
        const double fd2 = (m_loss_conjugate_grad_hess(DualVariables(ap), s).gradient.data()[i] -
                            m_loss_conjugate_grad_hess(DualVariables(am), s).gradient.data()[i]) / (2 * h);
        CHECK(std::abs(fd2 - dh.hessian.data()[i]) <= 1e-5 * std::max(1.0, std::abs(fd2)));
    }
    const auto zero = m_loss_conjugate_grad_hess(DualVariables(Matrix::Zero(1, 1)), Matrix::Zero(1, 1));
    CHECK(zero.gradient(0, 0) == 0.0);
    CHECK(zero.hessian(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("biconjugate recovers the loss") {
    // sup_a (a r - f*(a)) over a grid in (-1, 1) with refinement, r = s~ - s
    for (double s : {-1.0, 0.5})
        for (double st : {-3.0, -0.5, 0.0, 1.0, 2.5}) {
            auto neg = [&](double a) {
                return -(a * st - m_loss_conjugate(DualVariables(Matrix::Constant(1, 1, a)), Matrix::Constant(1, 1, s)));
            };
            double best_a = 0.0, best = neg(0.0);
            for (double a = -0.999999; a < 1.0; a += 1e-4)
                if (neg(a) < best) {
                    best = neg(a);
                    best_a = a;
                }
            const double lo = std::max(-1 + 1e-12, best_a - 2e-4), hi = std::min(1 - 1e-12, best_a + 2e-4);
            const double a_star = oracle::golden_min(neg, lo, hi);
            const double bi = -neg(a_star);
            CHECK(std::abs(bi - m_loss(Matrix::Constant(1, 1, st), Matrix::Constant(1, 1, s))) < 1e-6);
        }
}

TEST_CASE("DAL M-step satisfies KKT on random problems") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        const TimeSeries s = sparse_sources(seed, 800);
        for (double lam : {5.0, 40.0}) {
            for (bool diag : {false, true}) {
                const auto pen = diag ? GroupPenaltySpec::with_diagonal(lam) : GroupPenaltySpec::off_diagonal(lam);
                const auto r = solve_m_step_dal(s, 2, pen, MvarCoefficients::zeros(3, 2), DalConfig{});
                CHECK(r.kkt.satisfied(1e-6));
                CHECK(r.kkt.zero_group_ratio <= 1 + 1e-6);
                const KktReport again = m_step_kkt(s, r.h, pen);
                CHECK(again.stationarity == doctest::Approx(r.kkt.stationarity));
            }
        }
    }
}

TEST_CASE("huge lambda zeroes every penalized group and leaves the AR diagonal") {
    const TimeSeries s = sparse_sources(9);
    const auto r = solve_m_step_dal(s, 1, GroupPenaltySpec::off_diagonal(1e6), MvarCoefficients::zeros(3, 1), DalConfig{});
    for (Eigen::Index d = 0; d < 3; ++d)
        for (Eigen::Index e = 0; e < 3; ++e)
            if (d != e) CHECK(r.h.group_norm(d, e) == 0.0);
    CHECK(r.h.lag(1)(0, 0) > 0.2);
    CHECK(r.kkt.satisfied(1e-6));
}

TEST_CASE("lambda 0 matches a smooth quasi-Newton solve of the same objective") {
    const TimeSeries s = sparse_sources(10, 600);
    const auto pen = GroupPenaltySpec{};
    const auto r = solve_m_step_dal(s, 2, pen, MvarCoefficients::zeros(3, 2), DalConfig{});
    const Objective f = [&](const Vector& v, Vector* g) {
        std::vector<Matrix> lags;
        for (int p = 0; p < 2; ++p) lags.push_back(Eigen::Map<const Matrix>(v.data() + p * 9, 3, 3));
        const MvarCoefficients h(3, lags);
        if (g) {
            // gradient -(tanh(res)) s_lag^T with res = s - pred
            const Matrix& sd = s.data();
            const Eigen::Index n = sd.cols() - 2;
            Matrix pred = Matrix::Zero(3, n);
            for (int p = 1; p <= 2; ++p) pred += h.lag(p) * sd.middleCols(2 - p, n);
            const Matrix th = (pred - sd.rightCols(n)).array().tanh().matrix();
            g->resize(18);
            for (int p = 1; p <= 2; ++p) {
                const Matrix gp = th * sd.middleCols(2 - p, n).transpose();
                Eigen::Map<Matrix>(g->data() + (p - 1) * 9, 3, 3) = gp;
            }
        }
        return m_step_objective(s, h, pen);
    };
    OptimizerConfig cfg;
    cfg.grad_tol = 1e-10;
    const auto q = minimize(f, Vector::Zero(18), cfg);
    CHECK(r.objective == doctest::Approx(q.trace.final_value).epsilon(1e-9));
    CHECK(std::abs(r.objective - q.trace.final_value) < 1e-6);
}

TEST_CASE("two-source support recovery") {
    MvarCoefficients h(2, {Matrix{{0.4, 0.8 * 0.6}, {0.0, 0.3}}});
    const TimeSeries s = simulate_sources(h, 2000, sech_sampler(), 31).sources;
    const auto r = solve_m_step_dal(s, 1, GroupPenaltySpec::off_diagonal(30.0), MvarCoefficients::zeros(2, 1), DalConfig{});
    CHECK(r.h.group_norm(1, 0) == 0.0);
    CHECK(r.h.group_norm(0, 1) > 0.2);
    CHECK(r.kkt.satisfied(1e-6));
}

TEST_CASE("proximal gradient fallback reaches the same solution") {
    const TimeSeries s = sparse_sources(12, 600);
    const auto pen = GroupPenaltySpec::off_diagonal(10.0);
    const auto dal = solve_m_step_dal(s, 2, pen, MvarCoefficients::zeros(3, 2), DalConfig{});
    const auto pg = solve_m_step_proximal_gradient(s, 2, pen, MvarCoefficients::zeros(3, 2), 50000, 1e-7);
    CHECK(pg.objective == doctest::Approx(dal.objective).epsilon(1e-9));
}

TEST_CASE("m-step objective is midpoint convex in H") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> unif(0.05, 0.95);
    const TimeSeries s = sparse_sources(13, 300);
    const auto pen = GroupPenaltySpec::with_diagonal(2.0);
    for (int rep = 0; rep < 20; ++rep) {
        const auto h1 = oracle::random_lags(rng, 3, 2, 0.4), h2 = oracle::random_lags(rng, 3, 2, 0.4);
        const double th = unif(rng);
        std::vector<Matrix> hm;
        for (int k = 0; k < 2; ++k) hm.push_back(th * h1[k] + (1 - th) * h2[k]);
        const double lhs = m_step_objective(s, MvarCoefficients(3, hm), pen);
        const double rhs = th * m_step_objective(s, MvarCoefficients(3, h1), pen) +
                           (1 - th) * m_step_objective(s, MvarCoefficients(3, h2), pen);
        CHECK(lhs <= rhs + 1e-9);
    }
}

TEST_CASE("scalar E-step matches a golden-section search") {
    std::mt19937_64 rng(14);
    const Matrix x = oracle::randn(rng, 1, 400, 2.0);
    const MvarCoefficients h0 = MvarCoefficients::zeros(1, 0);
    OptimizerConfig cfg;
    cfg.grad_tol = 1e-12;
    const Matrix b = e_step(TimeSeries(x), h0, Matrix::Constant(1, 1, 1.0), cfg);
    auto f = [&](double w) {
        double acc = -400.0 * std::log(std::abs(w));
        for (Eigen::Index t = 0; t < 400; ++t) acc += oracle::logcosh(w * x(0, t));
        return acc;
    };
    const double ref = oracle::golden_min(f, 1e-3, 10.0);
    CHECK(std::abs(b(0, 0) - ref) < 1e-8);
}

TEST_CASE("E-step is independent of its start and stationary at the truth") {
    std::mt19937_64 rng(15);
    MvarCoefficients h(3, {Matrix{{0.5, 0.4, 0.0}, {0.0, 0.4, 0.0}, {0.0, 0.0, -0.3}}});
    const auto sim = simulate_sources(h, 2000, sech_sampler(), 15);
    const Matrix m = oracle::well_conditioned(rng, 3);
    const TimeSeries x(m * sim.sources.data());
    OptimizerConfig cfg;
    cfg.grad_tol = 1e-10;
    const Matrix b1 = e_step(x, h, Matrix::Identity(3, 3), cfg);
    const Matrix b2 = e_step(x, h, 2.0 * oracle::well_conditioned(rng, 3), cfg);
    const double c1 = cost_scsa(SourceModel{b1, h}, x, GroupPenaltySpec{});
    const double c2 = cost_scsa(SourceModel{b2, h}, x, GroupPenaltySpec{});
    CHECK(std::abs(c1 - c2) <= 1e-8 * std::max(1.0, std::abs(c1)));

    const CostReport r = grad_scsa(SourceModel{b1, h}, x, GroupPenaltySpec{});
    CHECK(r.gradient.head(9).cwiseAbs().maxCoeff() <= 1e-7 * std::abs(c1));
    // and it lands near the truth up to sign and order of the rows
    const Matrix g = b1 * m;
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(g.row(i).cwiseAbs().maxCoeff() > 0.9);
}

TEST_CASE("EM refinement never increases the composite cost") {
    std::mt19937_64 rng(16);
    const TimeSeries s = sparse_sources(16, 1000);
    const TimeSeries x(oracle::well_conditioned(rng, 3) * s.data());
    const auto pen = GroupPenaltySpec::off_diagonal(8.0);
    const TimeSeries segs[] = {x};
    const Fitted warm = fit_scsa(segs, 2, pen);
    const EmResult em = refine_scsa_em(x, warm.model, pen, 20, {}, {}, 0.0);
    REQUIRE(em.cost_history.size() >= 3);
    for (std::size_t i = 1; i < em.cost_history.size(); ++i)
        CHECK(em.cost_history[i] <= em.cost_history[i - 1] + 1e-9);
    CHECK(cost_scsa(em.model, x, pen) <= cost_scsa(warm.model, x, pen) + 1e-9);

    const EmResult none = refine_scsa_em(x, warm.model, pen, 0);
    CHECK(none.model.demixing == warm.model.demixing);
    CHECK(none.steps == 0);
}
