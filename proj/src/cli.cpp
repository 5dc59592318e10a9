#include "scsa/cli.hpp"

#include "scsa/errors.hpp"
#include "scsa/io.hpp"
#include "scsa/random.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

namespace scsa {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const PartitionError*>(&e) ||
        dynamic_cast<const ShapeError*>(&e))
        return kExitUsage;
    if (dynamic_cast<const IoError*>(&e)) return kExitIo;
    if (dynamic_cast<const NumericError*>(&e) || dynamic_cast<const StabilityError*>(&e) ||
        dynamic_cast<const DegenerateModelError*>(&e) || dynamic_cast<const IllPosedError*>(&e))
        return kExitNumeric;
    return kExitEstimator;
}

namespace {

std::string error_tag(const std::exception& e) {
    switch (exit_code_for(e)) {
        case kExitUsage: return "usage";
        case kExitIo: return "io";
        case kExitNumeric: return "numeric";
        default: return "estimator";
    }
}

std::size_t parse_count(const std::string& s) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
        v = std::stoul(s, &pos);
    } catch (const std::exception&) {
        throw UsageError("bad integer '" + s + "'");
    }
    if (pos != s.size()) throw UsageError("bad integer '" + s + "'");
    return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) parts.push_back(item);
    return parts;
}

}  // namespace

std::vector<std::size_t> parse_order_list(const std::string& text) {
    std::vector<std::size_t> out;
    const auto dots = text.find("..");
    if (dots != std::string::npos) {
        const std::size_t lo = parse_count(text.substr(0, dots));
        const std::size_t hi = parse_count(text.substr(dots + 2));
        if (lo > hi) throw UsageError("empty order range '" + text + "'");
        for (std::size_t p = lo; p <= hi; ++p) out.push_back(p);
    } else {
        for (const auto& part : split(text, ',')) out.push_back(parse_count(part));
    }
    if (out.empty()) throw UsageError("no model orders given");
    return out;
}

std::vector<double> parse_lambda_list(const std::string& text) {
    if (text == "auto" || text == "AUTO") return {};
    std::vector<double> out;
    for (const auto& part : split(text, ',')) {
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(part, &pos);
        } catch (const std::exception&) {
            throw UsageError("bad lambda '" + part + "'");
        }
        if (pos != part.size() || !(v >= 0.0) || !std::isfinite(v))
            throw UsageError("bad lambda '" + part + "'");
        out.push_back(v);
    }
    if (out.empty()) throw UsageError("no lambda given");
    return out;
}

void ExperimentConfig::validate() const {
    if (repetitions < 1) throw UsageError("repetitions must be at least 1");
    if (methods.empty()) throw UsageError("methods must not be empty");
    if (noise_kinds.empty()) throw UsageError("noise_kinds must not be empty");
    if (parallelism < 1) throw UsageError("parallelism must be at least 1");
    for (const auto& m : methods) m.validate();
    SimulationSpec s = simulation;
    for (auto k : noise_kinds) {
        s.noise = k;
        s.validate();
    }
}

ExperimentConfig experiment_config_from_json_text(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("config is not valid JSON: ") + e.what());
    }
    ExperimentConfig c;
    try {
        if (j.contains("simulation")) c.simulation = simulation_spec_from_json(j["simulation"]);
        if (j.contains("noise_kinds")) {
            c.noise_kinds.clear();
            for (const auto& k : j["noise_kinds"]) c.noise_kinds.push_back(parse_noise_kind(k.get<std::string>()));
        } else {
            c.noise_kinds = {c.simulation.noise};
        }
        if (!j.contains("methods")) throw UsageError("config field 'methods' is required");
        for (const auto& m : j["methods"]) {
            if (m.is_string()) {
                FitRequest r;
                r.method = parse_method(m.get<std::string>());
                c.methods.push_back(r);
            } else {
                c.methods.push_back(fit_request_from_json(m));
            }
        }
        c.repetitions = j.value("repetitions", c.repetitions);
        c.master_seed = j.value("master_seed", c.master_seed);
        c.output_dir = j.value("output_dir", c.output_dir.string());
        c.parallelism = j.value("parallelism", c.parallelism);
        c.save_runs = j.value("save_runs", c.save_runs);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("bad config: ") + e.what());
    }
    c.validate();
    return c;
}

std::uint64_t bench_dataset_seed(std::uint64_t master, std::size_t repetition, NoiseKind noise) {
    return derive_seed(master, {repetition, static_cast<std::uint64_t>(noise)});
}

std::uint64_t bench_run_seed(std::uint64_t master, std::size_t repetition, NoiseKind noise,
                             Method method) {
    return derive_seed(master, {repetition, static_cast<std::uint64_t>(noise),
                                100 + static_cast<std::uint64_t>(method)});
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const double pos = q * double(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - double(lo)) * (values[hi] - values[lo]);
}

std::string bench_results_csv(const std::vector<BenchRow>& rows) {
    std::vector<std::vector<std::string>> body;
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string{}; };
    for (const auto& r : rows) {
        const bool ok = r.error.empty();
        body.push_back({r.dataset, to_string(r.noise), to_string(r.method),
                        ok ? format_double(r.gof) : "", ok ? opt(r.auc) : "",
                        ok ? std::to_string(r.order) : "", ok ? opt(r.lambda) : "",
                        format_double(r.seconds), r.error});
    }
    return to_csv({"dataset", "noise", "method", "gof", "auc", "order", "lambda", "seconds", "error"},
                  body);
}

std::string bench_summary_csv(const std::vector<BenchRow>& rows) {
    // Groups in first-appearance order so the table follows the config.
    std::vector<std::pair<NoiseKind, Method>> keys;
    for (const auto& r : rows)
        if (std::find(keys.begin(), keys.end(), std::pair{r.noise, r.method}) == keys.end())
            keys.emplace_back(r.noise, r.method);
    std::vector<std::vector<std::string>> body;
    for (const auto& [noise, method] : keys) {
        std::vector<double> gof, auc;
        std::size_t failed = 0;
        for (const auto& r : rows) {
            if (r.noise != noise || r.method != method) continue;
            if (!r.error.empty()) {
                ++failed;
                continue;
            }
            gof.push_back(r.gof);
            if (r.auc) auc.push_back(*r.auc);
        }
        auto q = [](const std::vector<double>& v, double p) {
            return v.empty() ? std::string{} : format_double(quantile(v, p));
        };
        body.push_back({to_string(noise), to_string(method), std::to_string(gof.size()),
                        std::to_string(failed), q(gof, 0.25), q(gof, 0.5), q(gof, 0.75), q(auc, 0.25),
                        q(auc, 0.5), q(auc, 0.75)});
    }
    return to_csv({"noise", "method", "runs", "failed", "gof_q1", "gof_median", "gof_q3", "auc_q1",
                   "auc_median", "auc_q3"},
                  body);
}

BenchOutcome cmd_bench(const ExperimentConfig& cfg) {
    cfg.validate();
    struct Task {
        std::size_t rep;
        NoiseKind noise;
        std::size_t method;
    };
    std::vector<Task> tasks;
    for (std::size_t rep = 0; rep < cfg.repetitions; ++rep)
        for (auto k : cfg.noise_kinds)
            for (std::size_t m = 0; m < cfg.methods.size(); ++m) tasks.push_back({rep, k, m});

    std::error_code ec;
    fs::create_directories(cfg.output_dir / "runs", ec);
    if (ec) throw IoError("cannot create " + cfg.output_dir.string() + ": " + ec.message());

    std::vector<BenchRow> rows(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            const Task& t = tasks[i];
            BenchRow& row = rows[i];
            FitRequest req = cfg.methods[t.method];
            row.noise = t.noise;
            row.method = req.method;
            std::ostringstream id;
            id << "r" << t.rep << "_" << to_string(t.noise);
            row.dataset = id.str();
            const auto started = std::chrono::steady_clock::now();
            Json artifact{{"dataset", row.dataset}, {"method", to_string(req.method)}};
            try {
                SimulationSpec spec = cfg.simulation;
                spec.noise = t.noise;
                spec.seed = bench_dataset_seed(cfg.master_seed, t.rep, t.noise);
                const Dataset ds = generate(spec);
                req.seed = bench_run_seed(cfg.master_seed, t.rep, t.noise, req.method);
                const FitResult fit = run_fit(ds.x, req);
                const EvalReport rep = evaluate(ds, fit.model, fit.posthoc_mvar);
                row.gof = rep.gof_error;
                row.auc = rep.auc;
                row.order = fit.selected_order;
                row.lambda = fit.selected_lambda;
                artifact["dataset_seed"] = spec.seed;
                artifact["request"] = to_json(req);
                Json fj = to_json(fit);
                fj.erase("wall_time_s");  // timing lives in the CSV only
                artifact["fit"] = fj;
                Json ej = to_json(rep);
                ej.erase("wall_time_s");
                artifact["report"] = ej;
            } catch (const std::exception& e) {
                row.error = error_tag(e) + ": " + to_string(req.method) + " on " + row.dataset + ": " + e.what();
                artifact["error"] = row.error;
            }
            row.seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
            if (cfg.save_runs) {
                try {
                    write_file_atomic(cfg.output_dir / "runs" /
                                          (row.dataset + "_" + to_string(req.method) + ".json"),
                                      artifact.dump(2) + "\n");
                } catch (const std::exception& e) {
                    if (row.error.empty()) row.error = std::string("io: ") + e.what();
                }
            }
        }
    };
    const std::size_t n_workers = std::min(cfg.parallelism, std::max<std::size_t>(1, tasks.size()));
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    BenchOutcome out;
    out.rows = std::move(rows);
    out.results_csv = cfg.output_dir / "results.csv";
    out.summary_csv = cfg.output_dir / "summary.csv";
    write_file_atomic(out.results_csv, bench_results_csv(out.rows));
    write_file_atomic(out.summary_csv, bench_summary_csv(out.rows));
    return out;
}

Dataset cmd_simulate(const SimulationSpec& spec, const fs::path& out) {
    Dataset ds = generate(spec);
    save_dataset(out, ds);
    return ds;
}

FitResult cmd_fit(const fs::path& dataset_dir, const FitRequest& request, const fs::path& out) {
    const TimeSeries x = read_signals(dataset_dir / "signals");
    FitResult r;
    try {
        r = run_fit(x, request);
    } catch (const Error& e) {
        // Keep the original class so the exit code stays meaningful.
        const std::string where = to_string(request.method) + " on " + dataset_dir.string() + ": ";
        if (dynamic_cast<const UsageError*>(&e)) throw UsageError(where + e.what());
        if (dynamic_cast<const NumericError*>(&e)) throw NumericError(where + e.what());
        throw Error(where + e.what());
    }
    write_file_atomic(out, to_json(r).dump(2) + "\n");
    return r;
}

EvalReport cmd_eval(const fs::path& dataset_dir, const fs::path& model_file) {
    const Dataset ds = load_dataset(dataset_dir);
    Json j;
    try {
        j = Json::parse(read_file(model_file));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("cannot parse " + model_file.string() + ": " + e.what());
    }
    if (j.contains("demixing")) {
        const SourceModel m = source_model_from_json(j);
        if (m.dim() != ds.x.channels()) throw ShapeError("model dimension differs from the dataset");
        EvalReport r = evaluate(ds, m);
        r.selected_order = m.order();
        return r;
    }
    const FitResult fit = fit_result_from_json(j);
    if (fit.model.dim() != ds.x.channels()) throw ShapeError("model dimension differs from the dataset");
    EvalReport r = evaluate(ds, fit.model, fit.posthoc_mvar);
    r.selected_order = fit.selected_order;
    r.selected_lambda = fit.selected_lambda;
    r.wall_time_s = fit.wall_time_s;
    return r;
}

namespace {

std::string report_text(const EvalReport& r, const std::string& format) {
    if (format == "json") return to_json(r).dump(2) + "\n";
    return to_csv({"gof", "auc", "order", "lambda", "seconds"},
                  {{format_double(r.gof_error), r.auc ? format_double(*r.auc) : "",
                    std::to_string(r.selected_order),
                    r.selected_lambda ? format_double(*r.selected_lambda) : "",
                    format_double(r.wall_time_s)}});
}

std::string fit_text(const FitResult& r, const std::string& format) {
    if (format == "json") return to_json(r).dump(2) + "\n";
    return to_csv({"method", "order", "lambda", "seconds", "iterations", "final_value"},
                  {{to_string(r.method), std::to_string(r.selected_order),
                    r.selected_lambda ? format_double(*r.selected_lambda) : "",
                    format_double(r.wall_time_s), std::to_string(r.trace.iterations),
                    format_double(r.trace.final_value)}});
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Sparse connected-sources analysis: simulate, fit, evaluate, benchmark"};
    app.require_subcommand(1);
    std::string format = "json";

    SimulationSpec spec;
    std::string noise = "N0";
    std::string sim_out, sim_config;
    auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset");
    sim->add_option("--config", sim_config, "JSON file with simulation fields");
    sim->add_option("--sources", spec.sources);
    sim->add_option("--order", spec.order);
    sim->add_option("--samples", spec.samples);
    sim->add_option("--interactions", spec.interactions);
    sim->add_option("--noise", noise, "N0..N6");
    sim->add_option("--snr", spec.snr);
    sim->add_option("--noise-ar-order", spec.noise_ar_order);
    sim->add_option("--sensors", spec.sensors);
    sim->add_option("--ambient", spec.ambient_sources);
    sim->add_option("--seed", spec.seed);
    sim->add_option("--out", sim_out, "Output directory")->required();

    std::string fit_dir, fit_method = "scsa", fit_orders = "1..7", fit_lambda = "auto", fit_out;
    FitRequest fit_req;
    auto* fit = app.add_subcommand("fit", "Fit an estimator to a dataset");
    fit->add_option("dataset", fit_dir)->required();
    fit->add_option("--method", fit_method, "csa|scsa|scsa_em|mvarica|ica");
    fit->add_option("--orders", fit_orders, "e.g. 1..7 or 2,4");
    fit->add_option("--lambda", fit_lambda, "auto, a value, or a comma list");
    fit->add_option("--folds", fit_req.cv_folds);
    fit->add_option("--seed", fit_req.seed);
    fit->add_flag("--penalize-diagonal", fit_req.penalize_diagonal);
    fit->add_option("--out", fit_out, "Fit result path (default <dataset>/fit_<method>.json)");
    fit->add_option("--format", format, "json|csv")->check(CLI::IsMember({"json", "csv"}));

    std::string eval_dir, eval_model, eval_out;
    auto* ev = app.add_subcommand("eval", "Score a model against dataset ground truth");
    ev->add_option("dataset", eval_dir)->required();
    ev->add_option("model", eval_model)->required();
    ev->add_option("--out", eval_out, "Report path");
    ev->add_option("--format", format, "json|csv")->check(CLI::IsMember({"json", "csv"}));

    std::string bench_config, bench_out;
    std::size_t threads = 0;
    auto* bench = app.add_subcommand("bench", "Run a batch experiment from a JSON config");
    bench->add_option("config", bench_config)->required();
    bench->add_option("--threads", threads, "Worker count (overrides the config)");
    bench->add_option("--out-dir", bench_out, "Output directory (overrides the config)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*sim) {
            if (!sim_config.empty()) {
                Json j;
                try {
                    j = Json::parse(read_file(sim_config));
                } catch (const nlohmann::json::exception& e) {
                    throw UsageError(std::string("bad simulation config: ") + e.what());
                }
                // Flags given explicitly still win over the file.
                SimulationSpec base = simulation_spec_from_json(j);
                if (sim->count("--sources") == 0) spec.sources = base.sources;
                if (sim->count("--order") == 0) spec.order = base.order;
                if (sim->count("--samples") == 0) spec.samples = base.samples;
                if (sim->count("--interactions") == 0) spec.interactions = base.interactions;
                if (sim->count("--noise") == 0) noise = to_string(base.noise);
                if (sim->count("--snr") == 0) spec.snr = base.snr;
                if (sim->count("--noise-ar-order") == 0) spec.noise_ar_order = base.noise_ar_order;
                if (sim->count("--sensors") == 0) spec.sensors = base.sensors;
                if (sim->count("--ambient") == 0) spec.ambient_sources = base.ambient_sources;
                if (sim->count("--seed") == 0) spec.seed = base.seed;
            }
            spec.noise = parse_noise_kind(noise);
            const Dataset ds = cmd_simulate(spec, sim_out);
            std::cout << "dataset " << sim_out << ": " << ds.x.channels() << " channels x "
                      << ds.x.samples() << " samples, noise " << to_string(spec.noise) << ", snr "
                      << (ds.metadata.snr ? format_double(*ds.metadata.snr) : "absent") << ", seed "
                      << spec.seed << "\n";
        } else if (*fit) {
            fit_req.method = parse_method(fit_method);
            fit_req.order_candidates = parse_order_list(fit_orders);
            fit_req.lambda_grid = parse_lambda_list(fit_lambda);
            const fs::path out =
                fit_out.empty() ? fs::path(fit_dir) / ("fit_" + to_string(fit_req.method) + ".json")
                                : fs::path(fit_out);
            const FitResult r = cmd_fit(fit_dir, fit_req, out);
            std::cout << fit_text(r, format);
        } else if (*ev) {
            const EvalReport r = cmd_eval(eval_dir, eval_model);
            const std::string text = report_text(r, format);
            if (!eval_out.empty()) write_file_atomic(eval_out, text);
            std::cout << text;
        } else if (*bench) {
            ExperimentConfig cfg = experiment_config_from_json_text(read_file(bench_config));
            if (threads > 0) cfg.parallelism = threads;
            if (!bench_out.empty()) cfg.output_dir = bench_out;
            const BenchOutcome out = cmd_bench(cfg);
            std::size_t failed = 0;
            for (const auto& r : out.rows) failed += r.error.empty() ? 0 : 1;
            std::cout << read_file(out.summary_csv);
            std::cout << out.rows.size() << " runs, " << failed << " failed; results in "
                      << out.results_csv.string() << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return kExitOk;
}

}  // namespace scsa
