// Acceptance checks, one line per criterion. Pass criterion numbers as
// arguments to run a subset.

#include "oracles.hpp"

#include "scsa/cli.hpp"
#include "scsa/cost.hpp"
#include "scsa/em_dal.hpp"
#include "scsa/errors.hpp"
#include "scsa/estimators.hpp"
#include "scsa/evaluation.hpp"
#include "scsa/io.hpp"
#include "scsa/model.hpp"
#include "scsa/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>

using namespace scsa;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

Vector pack(const std::vector<Matrix>& ms) {
    Eigen::Index n = 0;
    for (const auto& m : ms) n += m.size();
    Vector v(n);
    Eigen::Index k = 0;
    for (const auto& m : ms)
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) v(k++) = m(i, j);
    return v;
}

std::vector<Matrix> unpack(const Vector& v, Eigen::Index d, std::size_t count) {
    std::vector<Matrix> ms(count, Matrix(d, d));
    Eigen::Index k = 0;
    for (auto& m : ms)
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = 0; j < d; ++j) m(i, j) = v(k++);
    return ms;
}

Matrix random_spd(std::mt19937_64& rng, Eigen::Index d) {
    const Matrix a = oracle::randn(rng, d, d, 0.5);
    return a * a.transpose() + 0.5 * Matrix::Identity(d, d);
}

Outcome gradients() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    double worst_csa = 0, worst_scsa = 0, worst_conj = 0;
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix x = oracle::randn(rng, 3, 40);
        std::vector<Matrix> w{oracle::well_conditioned(rng, 3)};
        for (int p = 0; p < 2; ++p) w.push_back(oracle::randn(rng, 3, 3, 0.3));
        const Vector g = grad_csa(FilterBank{w}, TimeSeries(x)).gradient;
        const Vector fd = oracle::fd_gradient([&](const Vector& v) { return oracle::naive_nll(unpack(v, 3, 3), x); },
                                              pack(w));
        worst_csa = std::max(worst_csa, oracle::relative_error(g, fd));
    }
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix x = oracle::randn(rng, 3, 40);
        const Matrix b = oracle::well_conditioned(rng, 3);
        auto h = oracle::random_lags(rng, 3, 2, 0.2);
        for (auto& m : h) m = m.unaryExpr([](double v) { return v >= 0 ? v + 0.1 : v - 0.1; });
        const double lam = 0.5 + rep % 4;
        const bool diag = rep % 2 == 1;
        const auto pen = diag ? GroupPenaltySpec::with_diagonal(lam) : GroupPenaltySpec::off_diagonal(lam);
        const Vector g = grad_scsa(SourceModel{b, MvarCoefficients(3, h)}, TimeSeries(x), pen).gradient;
        std::vector<Matrix> all{b};
        all.insert(all.end(), h.begin(), h.end());
        const Vector fd = oracle::fd_gradient(
            [&](const Vector& v) {
                const auto ms = unpack(v, 3, 3);
                return oracle::naive_scsa(ms[0], {ms[1], ms[2]}, x, lam, diag ? lam : 0.0);
            },
            pack(all));
        worst_scsa = std::max(worst_scsa, oracle::relative_error(g, fd));
    }
    std::uniform_real_distribution<double> unif(-0.95, 0.95);
    for (int rep = 0; rep < 20; ++rep) {
        Matrix a(3, 40);
        for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = unif(rng);
        const Matrix s = oracle::randn(rng, 3, 40);
        const auto dh = m_loss_conjugate_grad_hess(DualVariables(a), s);
        const Vector g = Eigen::Map<const Vector>(dh.gradient.data(), dh.gradient.size());
        const Vector fd = oracle::fd_gradient(
            [&](const Vector& v) {
                return m_loss_conjugate(DualVariables(Eigen::Map<const Matrix>(v.data(), 3, 40)), s);
            },
            Eigen::Map<const Vector>(a.data(), a.size()));
        worst_conj = std::max(worst_conj, oracle::relative_error(g, fd));
    }
    const double secs = seconds_since(t0);
    const double worst = std::max({worst_csa, worst_scsa, worst_conj});
    return {worst <= 1e-5 && secs < 10.0,
            "max relative error csa " + fmt("%.2e", worst_csa) + ", scsa " + fmt("%.2e", worst_scsa) +
                ", conjugate " + fmt("%.2e", worst_conj) + " (limit 1e-5), " + fmt("%.2f", secs) + " s"};
}

Outcome round_trip() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<int> dim(1, 8), ord(1, 7);
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        const Eigen::Index d = dim(rng);
        const int p = ord(rng);
        const SourceModel m{oracle::well_conditioned(rng, d), MvarCoefficients(d, oracle::random_lags(rng, d, p, 0.3))};
        const SourceModel back = filter_bank_to_source_model(source_model_to_filter_bank(m));
        worst = std::max(worst, (back.demixing - m.demixing).cwiseAbs().maxCoeff());
        for (int k = 1; k <= p; ++k)
            worst = std::max(worst, (back.mvar.lag(static_cast<std::size_t>(k)) - m.mvar.lag(static_cast<std::size_t>(k)))
                                        .cwiseAbs()
                                        .maxCoeff());

        std::vector<Matrix> taps{oracle::well_conditioned(rng, d)};
        for (int k = 0; k < p; ++k) taps.push_back(oracle::randn(rng, d, d, 0.3));
        const FilterBank fb{taps};
        const FilterBank fb2 = source_model_to_filter_bank(filter_bank_to_source_model(fb));
        for (std::size_t k = 0; k < taps.size(); ++k)
            worst = std::max(worst, (fb2.taps[k] - taps[k]).cwiseAbs().maxCoeff());
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-12 && secs < 1.0,
            "max abs deviation " + fmt("%.2e", worst) + " over 100 models each way, " + fmt("%.3f", secs) + " s"};
}

Outcome conjugate() {
    const auto t0 = Clock::now();
    double worst = 0.0, worst_bi = 0.0;
    for (double a : {-0.9, -0.5, 0.0, 0.5, 0.9})
        for (double s : {-2.0, 0.0, 3.0}) {
            const double closed =
                m_loss_conjugate(DualVariables(Matrix::Constant(1, 1, a)), Matrix::Constant(1, 1, s));
            worst = std::max(worst, std::abs(closed - oracle::legendre_numeric(a, s)));
        }
    for (double s : {-2.0, 0.0, 3.0})
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
            const double a_star = oracle::golden_min(neg, std::max(-1 + 1e-12, best_a - 2e-4),
                                                     std::min(1 - 1e-12, best_a + 2e-4));
            worst_bi = std::max(worst_bi, std::abs(-neg(a_star) - m_loss(Matrix::Constant(1, 1, st),
                                                                          Matrix::Constant(1, 1, s))));
        }
    const double secs = seconds_since(t0);
    return {worst <= 1e-8 && worst_bi <= 1e-6 && secs < 5.0,
            "closed form vs numerical transform " + fmt("%.2e", worst) + " (limit 1e-8), biconjugate " +
                fmt("%.2e", worst_bi) + " (limit 1e-6), " + fmt("%.2f", secs) + " s"};
}

Outcome convexity_kkt() {
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<double> unif(0.05, 0.95);
    double viol_b = -1e300, viol_h = -1e300;
    for (int rep = 0; rep < 50; ++rep) {
        // E-step objective in B on positive definite pairs, where -log|det B| is convex
        const TimeSeries x(oracle::randn(rng, 3, 80));
        const MvarCoefficients h(3, oracle::random_lags(rng, 3, 2, 0.3));
        const Matrix b1 = random_spd(rng, 3), b2 = random_spd(rng, 3);
        const double th = unif(rng);
        const auto pen = GroupPenaltySpec::off_diagonal(0.5);
        const double lhs = cost_scsa(SourceModel{th * b1 + (1 - th) * b2, h}, x, pen);
        const double rhs = th * cost_scsa(SourceModel{b1, h}, x, pen) + (1 - th) * cost_scsa(SourceModel{b2, h}, x, pen);
        viol_b = std::max(viol_b, lhs - rhs);

        // M-step objective in H
        const TimeSeries s = simulate_sources(sample_sparse_mvar(3, 2, 2, 500 + rep), 300, sech_sampler(), rep).sources;
        const auto h1 = oracle::random_lags(rng, 3, 2, 0.4), h2 = oracle::random_lags(rng, 3, 2, 0.4);
        std::vector<Matrix> hm;
        for (int k = 0; k < 2; ++k) hm.push_back(th * h1[k] + (1 - th) * h2[k]);
        const auto penh = GroupPenaltySpec::with_diagonal(2.0);
        const double lh = m_step_objective(s, MvarCoefficients(3, hm), penh);
        const double rh = th * m_step_objective(s, MvarCoefficients(3, h1), penh) +
                          (1 - th) * m_step_objective(s, MvarCoefficients(3, h2), penh);
        viol_h = std::max(viol_h, lh - rh);
    }
    double worst_ratio = 0.0, worst_stat = 0.0;
    std::size_t zero_groups = 0;
    std::uniform_real_distribution<double> lam(1.0, 80.0);
    for (int rep = 0; rep < 20; ++rep) {
        const Eigen::Index d = 3 + rep % 2;
        const TimeSeries s =
            simulate_sources(sample_sparse_mvar(d, 2, 3, 700 + rep), 1000, sech_sampler(), 800 + rep).sources;
        const auto pen = rep % 3 == 0 ? GroupPenaltySpec::with_diagonal(lam(rng)) : GroupPenaltySpec::off_diagonal(lam(rng));
        const MStepResult r = solve_m_step_dal(s, 2, pen, MvarCoefficients::zeros(d, 2), DalConfig{});
        worst_ratio = std::max(worst_ratio, r.kkt.zero_group_ratio);
        worst_stat = std::max(worst_stat, r.kkt.stationarity);
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = 0; j < d; ++j) zero_groups += i != j && r.h.group_norm(i, j) == 0.0;
    }
    const bool pass = viol_b <= 1e-9 && viol_h <= 1e-9 && worst_ratio <= 1 + 1e-6 && worst_stat <= 1e-6;
    return {pass, "midpoint excess B " + fmt("%.2e", viol_b) + " (positive definite pairs), H " + fmt("%.2e", viol_h) +
                      "; DAL zero-group ratio " + fmt("%.8f", worst_ratio) + ", stationarity " +
                      fmt("%.2e", worst_stat) + ", " + std::to_string(zero_groups) + " zero groups over 20 problems"};
}

Outcome em_monotone() {
    double worst = -1e300;
    std::size_t half_steps = 0;
    for (int rep = 0; rep < 10; ++rep) {
        SimulationSpec spec;
        spec.sources = 4;
        spec.order = 2;
        spec.interactions = 3;
        spec.samples = 1000;
        spec.noise = rep % 2 ? NoiseKind::N3 : NoiseKind::N0;
        spec.seed = 900 + static_cast<std::uint64_t>(rep);
        const Dataset d = generate(spec);
        const auto pen = GroupPenaltySpec::off_diagonal(5.0 + 5.0 * rep);
        const TimeSeries segs[] = {d.x};
        const Fitted warm = fit_scsa(segs, 2, pen);
        const EmResult em = refine_scsa_em(d.x, warm.model, pen, 20, {}, {}, 0.0);
        for (std::size_t i = 1; i < em.cost_history.size(); ++i)
            worst = std::max(worst, em.cost_history[i] - em.cost_history[i - 1]);
        half_steps += em.cost_history.size() - 1;
    }
    return {worst <= 1e-9, "largest cost increase " + fmt("%.2e", worst) + " over " + std::to_string(half_steps) +
                               " half-steps (slack 1e-9)"};
}

Outcome noiseless_recovery() {
    const auto t0 = Clock::now();
    std::vector<double> gofs, aucs;
    for (int rep = 0; rep < 20; ++rep) {
        SimulationSpec spec;
        spec.sources = 4;
        spec.order = 2;
        spec.interactions = 3;
        spec.samples = 2000;
        spec.noise = NoiseKind::N0;
        spec.seed = 1000 + static_cast<std::uint64_t>(rep);
        const Dataset d = generate(spec);
        FitRequest req;
        req.method = Method::SCSA;
        req.seed = spec.seed;
        const FitResult f = run_fit(d.x, req);
        const EvalReport e = evaluate(d, f.model);
        gofs.push_back(e.gof_error);
        aucs.push_back(e.auc.value_or(0.0));
    }
    const double secs = seconds_since(t0);
    const double mg = median(gofs), ma = median(aucs);
    return {mg <= 0.1 && ma >= 0.95 && secs < 600.0,
            "median GOF " + fmt("%.4f", mg) + " (limit 0.1), median AUC " + fmt("%.4f", ma) + " (limit 0.95), " +
                fmt("%.1f", secs) + " s"};
}

ExperimentConfig bench_config(const fs::path& out, std::size_t reps, std::vector<NoiseKind> kinds,
                              std::size_t threads, std::uint64_t seed) {
    ExperimentConfig cfg;
    cfg.simulation.sources = 4;
    cfg.simulation.order = 4;
    cfg.simulation.interactions = 3;
    cfg.simulation.samples = 2000;
    cfg.simulation.snr = 2.0;
    cfg.noise_kinds = std::move(kinds);
    for (Method m : {Method::SCSA_EM, Method::SCSA, Method::CSA, Method::MVARICA, Method::ICA}) {
        FitRequest r;
        r.method = m;
        cfg.methods.push_back(r);
    }
    cfg.repetitions = reps;
    cfg.master_seed = seed;
    cfg.output_dir = out;
    cfg.parallelism = threads;
    return cfg;
}

std::size_t worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

Outcome method_ordering() {
    const auto t0 = Clock::now();
    const std::vector<NoiseKind> kinds{NoiseKind::N0, NoiseKind::N1, NoiseKind::N2, NoiseKind::N3,
                                       NoiseKind::N4, NoiseKind::N5, NoiseKind::N6};
    const BenchOutcome out = cmd_bench(bench_config("acceptance_ordering", 20, kinds, worker_count(), 7));
    const double secs = seconds_since(t0);

    std::map<std::pair<NoiseKind, Method>, std::vector<double>> gof, auc;
    std::size_t failed = 0;
    for (const auto& r : out.rows) {
        if (!r.error.empty()) {
            ++failed;
            continue;
        }
        gof[{r.noise, r.method}].push_back(r.gof);
        if (r.auc) auc[{r.noise, r.method}].push_back(*r.auc);
    }
    int ordered = 0;
    bool auc_ok = true;
    std::ostringstream per_kind;
    for (NoiseKind k : kinds) {
        const double s = median(gof[{k, Method::SCSA}]), c = median(gof[{k, Method::CSA}]),
                     m = median(gof[{k, Method::MVARICA}]), i = median(gof[{k, Method::ICA}]);
        const bool ok = s <= c && c <= m && m <= i;
        ordered += ok;
        const double as = median(auc[{k, Method::SCSA}]), ai = median(auc[{k, Method::ICA}]);
        auc_ok = auc_ok && as >= ai;
        per_kind << " " << to_string(k) << (ok ? "+" : "-") << "[" << fmt("%.3f", s) << "/" << fmt("%.3f", c) << "/"
                 << fmt("%.3f", m) << "/" << fmt("%.3f", i) << " auc " << fmt("%.2f", as) << ">="
                 << fmt("%.2f", ai) << "]";
    }
    return {ordered >= 5 && auc_ok && secs < 7200.0,
            "GOF ordering SCSA<=CSA<=MVARICA<=ICA holds for " + std::to_string(ordered) +
                " of 7 kinds (need 5), SCSA AUC >= ICA AUC for all kinds: " + (auc_ok ? "yes" : "no") + ", " +
                std::to_string(failed) + " failed runs, " + fmt("%.0f", secs) + " s;" + per_kind.str()};
}

Outcome order_selection() {
    int hits = 0;
    std::map<std::size_t, int> histogram;
    const std::size_t cands[] = {1, 2, 3, 4, 5, 6, 7};
    for (int rep = 0; rep < 50; ++rep) {
        SimulationSpec spec;
        spec.sources = 4;
        spec.order = 4;
        spec.interactions = 3;
        spec.samples = 2000;
        spec.noise = NoiseKind::N0;
        spec.seed = 2000 + static_cast<std::uint64_t>(rep);
        const Dataset d = generate(spec);
        const OrderSelection sel = select_order_bic(d.x, Method::CSA, cands);
        hits += sel.order == 4;
        ++histogram[sel.order];
    }
    std::string hist;
    for (const auto& [p, n] : histogram) hist += " P=" + std::to_string(p) + ":" + std::to_string(n);
    return {hits >= 40, "true order selected in " + std::to_string(hits) + " of 50 runs (need 40);" + hist};
}

// FNV-1a over every artifact, with the wall-time column of results.csv masked
std::uint64_t hash_bench_output(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
    std::sort(files.begin(), files.end());
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
    };
    for (const auto& f : files) {
        mix(f.generic_string());
        std::string content = read_file(dir / f);
        if (f == "results.csv") {
            std::istringstream in(content);
            std::string line, masked;
            while (std::getline(in, line)) {
                std::vector<std::string> cells;
                std::string cell;
                std::istringstream ls(line);
                while (std::getline(ls, cell, ',')) cells.push_back(cell);
                if (cells.size() > 7) cells[7] = "-";
                for (const auto& c : cells) masked += c + ",";
                masked += "\n";
            }
            content = masked;
        }
        mix(content);
    }
    return h;
}

Outcome determinism() {
    const std::vector<NoiseKind> kinds{NoiseKind::N0, NoiseKind::N3, NoiseKind::N5};
    const std::size_t threads = std::min<std::size_t>(2, worker_count());
    fs::remove_all("acceptance_det_a");
    fs::remove_all("acceptance_det_b");
    cmd_bench(bench_config("acceptance_det_a", 2, kinds, threads, 99));
    cmd_bench(bench_config("acceptance_det_b", 2, kinds, threads, 99));
    const std::uint64_t a = hash_bench_output("acceptance_det_a"), b = hash_bench_output("acceptance_det_b");

    // a separate generate -> fit chain outside the batch runner
    SimulationSpec spec;
    spec.sources = 4;
    spec.noise = NoiseKind::N6;
    spec.seed = 5;
    const Dataset d1 = generate(spec), d2 = generate(spec);
    FitRequest req;
    req.method = Method::SCSA_EM;
    req.order_candidates = {1, 2, 3};
    const FitResult f1 = run_fit(d1.x, req), f2 = run_fit(d2.x, req);
    const bool chain = d1.x.data() == d2.x.data() && f1.model.demixing == f2.model.demixing &&
                       f1.cv_curve == f2.cv_curve && f1.selected_lambda == f2.selected_lambda;

    std::ostringstream msg;
    msg << "bench artifact hashes " << std::hex << a << " and " << b << std::dec
        << " (wall-time column masked), generate/fit chain " << (chain ? "identical" : "differs");
    return {a == b && chain, msg.str()};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient correctness", gradients},
        {"transform round trip", round_trip},
        {"conjugate correctness", conjugate},
        {"convexity and KKT", convexity_kkt},
        {"EM monotonicity", em_monotone},
        {"noiseless recovery", noiseless_recovery},
        {"method ordering across noise kinds", method_ordering},
        {"BIC order selection", order_selection},
        {"determinism", determinism},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int number = static_cast<int>(i + 1);
        if (!selected.empty() && !selected.count(number)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << number << " (" << criteria[i].first
                  << "): " << o.detail << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
