#include "scsa/io.hpp"

#include "scsa/errors.hpp"
#include "scsa/version.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace scsa {

namespace fs = std::filesystem;

namespace {

constexpr int kFormatVersion = 1;

double json_double(const Json& j) {
    // NaN and infinities serialize as null.
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    return j.get<double>();
}

Json double_json(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

template <class T>
T require(const Json& j, const char* key) {
    if (!j.contains(key)) throw IoError(std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad field '") + key + "': " + e.what());
    }
}

Json parse_json(const fs::path& path) {
    try {
        return Json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("cannot parse " + path.string() + ": " + e.what());
    }
}

fs::path with_suffix(const fs::path& stem, const char* ext) {
    return fs::path(stem.string() + ext);
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& content) {
    const fs::path tmp = fs::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_signals(const fs::path& stem, const TimeSeries& x) {
    const Matrix& m = x.data();
    std::string bytes(static_cast<std::size_t>(m.size()) * 8, '\0');
    // Eigen storage is column-major, i.e. channel-fastest per time point.
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        auto bits = std::bit_cast<std::uint64_t>(m.data()[i]);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        std::memcpy(bytes.data() + 8 * i, &bits, 8);
    }
    write_file_atomic(with_suffix(stem, ".bin"), bytes);
    Json header{{"channels", m.rows()},
                {"samples", m.cols()},
                {"layout", "column-major"},
                {"dtype", "float64-le"},
                {"version", kFormatVersion}};
    write_file_atomic(with_suffix(stem, ".json"), header.dump(2) + "\n");
}

TimeSeries read_signals(const fs::path& stem) {
    const Json header = parse_json(with_suffix(stem, ".json"));
    const auto channels = require<Eigen::Index>(header, "channels");
    const auto samples = require<Eigen::Index>(header, "samples");
    if (require<std::string>(header, "layout") != "column-major")
        throw IoError("unsupported signal layout");
    if (header.contains("dtype") && header["dtype"] != "float64-le")
        throw IoError("unsupported signal dtype");
    if (channels < 1 || samples < 1) throw IoError("signal header has empty dimensions");
    const std::string bytes = read_file(with_suffix(stem, ".bin"));
    if (bytes.size() != static_cast<std::size_t>(channels * samples) * 8)
        throw IoError("signal file size does not match header");
    Matrix m(channels, samples);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, bytes.data() + 8 * i, 8);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        m.data()[i] = std::bit_cast<double>(bits);
    }
    return TimeSeries(std::move(m));
}

Json to_json(const Matrix& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(double_json(m(r, c)));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const Json& j) {
    if (!j.is_array()) throw IoError("matrix must be an array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (!j[r].is_array() || static_cast<Eigen::Index>(j[r].size()) != cols)
            throw IoError("ragged matrix rows");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = json_double(j[r][c]);
    }
    return m;
}

Json to_json(const MvarCoefficients& h) {
    Json lags = Json::array();
    for (const auto& l : h.lags()) lags.push_back(to_json(l));
    return Json{{"dim", h.dim()}, {"order", h.order()}, {"lags", lags}};
}

MvarCoefficients mvar_from_json(const Json& j) {
    const auto dim = require<Eigen::Index>(j, "dim");
    std::vector<Matrix> lags;
    for (const auto& l : j.at("lags")) lags.push_back(matrix_from_json(l));
    try {
        return MvarCoefficients(dim, std::move(lags));
    } catch (const Error& e) {
        throw IoError(std::string("invalid MVAR coefficients: ") + e.what());
    }
}

Json to_json(const SourceModel& m) {
    return Json{{"demixing", to_json(m.demixing)}, {"mvar", to_json(m.mvar)}};
}

SourceModel source_model_from_json(const Json& j) {
    if (!j.contains("demixing") || !j.contains("mvar")) throw IoError("model needs demixing and mvar");
    SourceModel m{matrix_from_json(j["demixing"]), mvar_from_json(j["mvar"])};
    return m;
}

Json to_json(const SimulationSpec& s) {
    return Json{{"sources", s.sources},
                {"order", s.order},
                {"samples", s.samples},
                {"interactions", s.interactions},
                {"noise", to_string(s.noise)},
                {"snr", s.snr},
                {"noise_ar_order", s.noise_ar_order},
                {"sensors", s.sensors},
                {"ambient_sources", s.ambient_sources},
                {"seed", s.seed}};
}

SimulationSpec simulation_spec_from_json(const Json& j) {
    SimulationSpec s;
    try {
        s.sources = j.value("sources", s.sources);
        s.order = j.value("order", s.order);
        s.samples = j.value("samples", s.samples);
        s.interactions = j.value("interactions", s.interactions);
        if (j.contains("noise")) s.noise = parse_noise_kind(j["noise"].get<std::string>());
        s.snr = j.value("snr", s.snr);
        s.noise_ar_order = j.value("noise_ar_order", s.noise_ar_order);
        s.sensors = j.value("sensors", s.sensors);
        s.ambient_sources = j.value("ambient_sources", s.ambient_sources);
        s.seed = j.value("seed", s.seed);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("bad simulation spec: ") + e.what());
    }
    return s;
}

Json to_json(const DatasetMetadata& m) {
    return Json{{"seed", m.seed},
                {"library_version", m.library_version},
                {"snr", m.snr ? Json(*m.snr) : Json(nullptr)},
                {"realized_snr", double_json(m.realized_snr)},
                {"spectral_radius", m.spectral_radius},
                {"mixing_condition", m.mixing_condition},
                {"innovation_density", m.innovation_density},
                {"coefficient_scheme", m.coefficient_scheme},
                {"mixing_scheme", m.mixing_scheme},
                {"noise_scheme", m.noise_scheme},
                {"burn_in", m.burn_in}};
}

namespace {

DatasetMetadata metadata_from_json(const Json& j) {
    DatasetMetadata m;
    m.seed = j.value("seed", std::uint64_t{0});
    m.library_version = j.value("library_version", std::string{});
    if (j.contains("snr") && !j["snr"].is_null()) m.snr = j["snr"].get<double>();
    m.realized_snr = j.contains("realized_snr") ? json_double(j["realized_snr"]) : 0.0;
    m.spectral_radius = j.value("spectral_radius", 0.0);
    m.mixing_condition = j.value("mixing_condition", 0.0);
    m.innovation_density = j.value("innovation_density", std::string{});
    m.coefficient_scheme = j.value("coefficient_scheme", std::string{});
    m.mixing_scheme = j.value("mixing_scheme", std::string{});
    m.noise_scheme = j.value("noise_scheme", std::string{});
    m.burn_in = j.value("burn_in", std::size_t{0});
    return m;
}

Json trace_json(const OptimizationTrace& t) {
    Json hist = Json::array();
    for (double v : t.value_history) hist.push_back(double_json(v));
    return Json{{"iterations", t.iterations},
                {"evaluations", t.evaluations},
                {"final_value", double_json(t.final_value)},
                {"final_grad_norm", double_json(t.final_grad_norm)},
                {"converged", t.converged},
                {"reason", to_string(t.reason)},
                {"value_history", hist}};
}

OptimizationTrace trace_from_json(const Json& j) {
    OptimizationTrace t;
    t.iterations = j.value("iterations", std::size_t{0});
    t.evaluations = j.value("evaluations", std::size_t{0});
    t.final_value = j.contains("final_value") ? json_double(j["final_value"]) : 0.0;
    t.final_grad_norm = j.contains("final_grad_norm") ? json_double(j["final_grad_norm"]) : 0.0;
    t.converged = j.value("converged", false);
    if (j.contains("value_history"))
        for (const auto& v : j["value_history"]) t.value_history.push_back(json_double(v));
    const std::string reason = j.value("reason", std::string{});
    for (auto r : {StopReason::GradientTolerance, StopReason::ValueTolerance,
                   StopReason::PrecisionLimit, StopReason::MaxIterations})
        if (to_string(r) == reason) t.reason = r;
    return t;
}

// Map keys as JSON object keys would lose exactness for doubles; use pairs.
Json pairs_json(const std::map<double, double>& m) {
    Json out = Json::array();
    for (const auto& [k, v] : m) out.push_back(Json::array({k, double_json(v)}));
    return out;
}

}  // namespace

Json to_json(const FitRequest& r) {
    return Json{{"method", to_string(r.method)},
                {"orders", r.order_candidates},
                {"lambda", r.lambda_grid.empty() ? Json("auto") : Json(r.lambda_grid)},
                {"folds", r.cv_folds},
                {"seed", r.seed},
                {"penalize_diagonal", r.penalize_diagonal}};
}

FitRequest fit_request_from_json(const Json& j) {
    FitRequest r;
    try {
        r.method = parse_method(require<std::string>(j, "method"));
        if (j.contains("orders")) r.order_candidates = j["orders"].get<std::vector<std::size_t>>();
        if (j.contains("lambda")) {
            const Json& l = j["lambda"];
            if (l.is_string()) {
                if (l.get<std::string>() != "auto") throw UsageError("lambda must be 'auto' or numbers");
            } else if (l.is_number()) {
                r.lambda_grid = {l.get<double>()};
            } else {
                r.lambda_grid = l.get<std::vector<double>>();
            }
        }
        r.cv_folds = j.value("folds", r.cv_folds);
        r.seed = j.value("seed", r.seed);
        r.penalize_diagonal = j.value("penalize_diagonal", r.penalize_diagonal);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("bad method entry: ") + e.what());
    }
    r.validate();
    return r;
}

Json to_json(const FitResult& r) {
    Json bic = Json::array();
    for (const auto& [p, v] : r.bic_per_order) bic.push_back(Json::array({p, double_json(v)}));
    Json j{{"method", to_string(r.method)},
           {"model", to_json(r.model)},
           {"selected_order", r.selected_order},
           {"selected_lambda", r.selected_lambda ? Json(*r.selected_lambda) : Json(nullptr)},
           {"bic_per_order", bic},
           {"cv_curve", pairs_json(r.cv_curve)},
           {"trace", trace_json(r.trace)},
           {"wall_time_s", r.wall_time_s},
           {"warnings", r.warnings}};
    if (r.posthoc_mvar) j["posthoc_mvar"] = to_json(*r.posthoc_mvar);
    return j;
}

FitResult fit_result_from_json(const Json& j) {
    FitResult r;
    try {
        r.method = parse_method(require<std::string>(j, "method"));
        r.model = source_model_from_json(j.at("model"));
        r.selected_order = require<std::size_t>(j, "selected_order");
        if (j.contains("selected_lambda") && !j["selected_lambda"].is_null())
            r.selected_lambda = j["selected_lambda"].get<double>();
        if (j.contains("bic_per_order"))
            for (const auto& e : j["bic_per_order"])
                r.bic_per_order[e[0].get<std::size_t>()] = json_double(e[1]);
        if (j.contains("cv_curve"))
            for (const auto& e : j["cv_curve"]) r.cv_curve[e[0].get<double>()] = json_double(e[1]);
        if (j.contains("trace")) r.trace = trace_from_json(j["trace"]);
        r.wall_time_s = j.value("wall_time_s", 0.0);
        if (j.contains("warnings")) r.warnings = j["warnings"].get<std::vector<std::string>>();
        if (j.contains("posthoc_mvar")) r.posthoc_mvar = mvar_from_json(j["posthoc_mvar"]);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad fit result: ") + e.what());
    }
    return r;
}

Json to_json(const EvalReport& r) {
    Json per = Json::array();
    for (Eigen::Index i = 0; i < r.per_pattern_gof.size(); ++i) per.push_back(r.per_pattern_gof(i));
    return Json{{"gof_error", r.gof_error},
                {"auc", r.auc ? Json(*r.auc) : Json(nullptr)},
                {"per_pattern_gof", per},
                {"pairing", r.true_of},
                {"selected_order", r.selected_order},
                {"selected_lambda", r.selected_lambda ? Json(*r.selected_lambda) : Json(nullptr)},
                {"wall_time_s", r.wall_time_s}};
}

EvalReport eval_report_from_json(const Json& j) {
    EvalReport r;
    try {
        r.gof_error = require<double>(j, "gof_error");
        if (j.contains("auc") && !j["auc"].is_null()) r.auc = j["auc"].get<double>();
        const auto per = j.at("per_pattern_gof").get<std::vector<double>>();
        r.per_pattern_gof = Eigen::Map<const Vector>(per.data(), static_cast<Eigen::Index>(per.size()));
        r.true_of = j.value("pairing", std::vector<Eigen::Index>{});
        r.selected_order = j.value("selected_order", std::size_t{0});
        if (j.contains("selected_lambda") && !j["selected_lambda"].is_null())
            r.selected_lambda = j["selected_lambda"].get<double>();
        r.wall_time_s = j.value("wall_time_s", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad evaluation report: ") + e.what());
    }
    return r;
}

void save_dataset(const fs::path& dir, const Dataset& ds) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    write_signals(dir / "signals", ds.x);
    write_signals(dir / "sources", ds.sources);
    Json support = Json::array();
    for (Eigen::Index d = 0; d < ds.true_support.rows(); ++d) {
        Json row = Json::array();
        for (Eigen::Index f = 0; f < ds.true_support.cols(); ++f) row.push_back(bool(ds.true_support(d, f)));
        support.push_back(row);
    }
    Json truth{{"spec", to_json(ds.spec)},
               {"true_mixing", to_json(ds.true_mixing.matrix())},
               {"true_h", to_json(ds.true_h)},
               {"true_support", support},
               {"projection", to_json(ds.projection)},
               {"sensor_mixing", to_json(ds.sensor_mixing)}};
    write_file_atomic(dir / "truth.json", truth.dump(2) + "\n");
    write_file_atomic(dir / "metadata.json", to_json(ds.metadata).dump(2) + "\n");
}

Dataset load_dataset(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("dataset directory " + dir.string() + " not found");
    Dataset ds;
    ds.x = read_signals(dir / "signals");
    if (fs::exists(dir / "sources.json")) ds.sources = read_signals(dir / "sources");
    const Json truth = parse_json(dir / "truth.json");
    try {
        ds.spec = simulation_spec_from_json(truth.at("spec"));
        ds.true_mixing = MixingMatrix(matrix_from_json(truth.at("true_mixing")));
        ds.true_h = mvar_from_json(truth.at("true_h"));
        const Json& s = truth.at("true_support");
        const auto n = static_cast<Eigen::Index>(s.size());
        ds.true_support = BoolMatrix::Constant(n, n, false);
        for (Eigen::Index d = 0; d < n; ++d)
            for (Eigen::Index f = 0; f < n; ++f) ds.true_support(d, f) = s.at(d).at(f).get<bool>();
        if (truth.contains("projection")) ds.projection = matrix_from_json(truth["projection"]);
        if (truth.contains("sensor_mixing")) ds.sensor_mixing = matrix_from_json(truth["sensor_mixing"]);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad truth.json: " + std::string(e.what()));
    } catch (const IoError&) {
        throw;
    } catch (const Error& e) {
        throw IoError("invalid ground truth: " + std::string(e.what()));
    }
    if (fs::exists(dir / "metadata.json")) ds.metadata = metadata_from_json(parse_json(dir / "metadata.json"));
    if (ds.x.channels() != ds.true_mixing.dim()) throw IoError("signal channels differ from ground truth");
    return ds;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string to_csv(const std::vector<std::string>& header,
                   const std::vector<std::vector<std::string>>& rows) {
    auto field = [](const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += '"';
            q += c;
        }
        return q + "\"";
    };
    std::string out;
    auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (i) out += ',';
            out += field(r[i]);
        }
        out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
}

}  // namespace scsa
