#include "scsa/simulator.hpp"

#include "scsa/errors.hpp"
#include "scsa/model.hpp"
#include "scsa/random.hpp"
#include "scsa/version.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>

namespace scsa {

namespace {

constexpr double kMinCoefficient = 0.1;
constexpr double kMaxCoefficient = 0.5;
constexpr double kDetectableGroupNorm = 0.1;
constexpr double kMaxMixingCondition = 1e3;
constexpr int kMaxAttempts = 100;

enum Stream : std::uint64_t { kCoefficients = 1, kMixing = 2, kSources = 3, kNoise = 4 };

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    return sample_matrix(rows, cols, gaussian_sampler(), rng);
}

// Filters white Gaussian noise through x(t) = sum c(j) x(t-j) + e(t).
Vector ar_series(const Vector& c, Eigen::Index samples, Rng& rng) {
    const Eigen::Index p = c.size();
    const Eigen::Index burn = std::max<Eigen::Index>(200, 10 * p);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector buf = Vector::Zero(burn + samples);
    for (Eigen::Index t = 0; t < buf.size(); ++t) {
        double v = normal(rng);
        for (Eigen::Index j = 1; j <= p && j <= t; ++j) v += c(j - 1) * buf(t - j);
        buf(t) = v;
    }
    return buf.tail(samples);
}

}  // namespace

std::string to_string(NoiseKind k) {
    return "N" + std::to_string(static_cast<int>(k));
}

NoiseKind parse_noise_kind(const std::string& s) {
    if (s.size() == 2 && (s[0] == 'N' || s[0] == 'n') && s[1] >= '0' && s[1] <= '6')
        return static_cast<NoiseKind>(s[1] - '0');
    throw UsageError("unknown noise kind '" + s + "' (expected N0..N6)");
}

void SimulationSpec::validate() const {
    if (sources < 1) throw UsageError("sources must be positive");
    if (order < 1) throw UsageError("order must be at least 1");
    const auto max_pairs = static_cast<std::size_t>(sources * (sources - 1));
    if (interactions > max_pairs)
        throw UsageError("interactions (" + std::to_string(interactions) +
                         ") exceed the number of off-diagonal pairs (" +
                         std::to_string(max_pairs) + ")");
    if (sensors < sources) throw UsageError("sensor count must be at least the source count");
    if (samples <= static_cast<Eigen::Index>(order) + 1)
        throw InsufficientDataError("sample count too small for the MVAR order");
    if (noise != NoiseKind::N0 && !(snr > 0.0 && std::isfinite(snr)))
        throw UsageError("snr must be positive and finite");
    if (is_temporally_correlated(noise) && noise_ar_order < 1)
        throw UsageError("noise AR order must be at least 1");
    if ((noise == NoiseKind::N3 || noise == NoiseKind::N6) && ambient_sources < 1)
        throw UsageError("ambient source count must be positive");
}

BoolMatrix support_of(const MvarCoefficients& h) {
    const Matrix norms = h.group_norms();
    BoolMatrix s = (norms.array() > 0.0);
    for (Eigen::Index d = 0; d < s.rows(); ++d) s(d, d) = false;
    return s;
}

MvarCoefficients sample_sparse_mvar(Eigen::Index dim, std::size_t order, std::size_t interactions,
                                    std::uint64_t seed) {
    if (dim < 1 || order < 1) throw UsageError("dimension and order must be positive");
    std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
    for (Eigen::Index d = 0; d < dim; ++d)
        for (Eigen::Index f = 0; f < dim; ++f)
            if (d != f) pairs.emplace_back(d, f);
    if (interactions > pairs.size())
        throw UsageError("more interactions requested than off-diagonal pairs");

    Rng rng(seed);
    std::uniform_real_distribution<double> magnitude(kMinCoefficient, kMaxCoefficient);
    std::bernoulli_distribution sign(0.5);
    auto draw = [&] { return sign(rng) ? magnitude(rng) : -magnitude(rng); };

    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        // partial Fisher-Yates for a uniform subset of pairs
        for (std::size_t i = 0; i < interactions; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pairs.size() - 1);
            std::swap(pairs[i], pairs[pick(rng)]);
        }
        auto h = MvarCoefficients::zeros(dim, order);
        for (std::size_t p = 1; p <= order; ++p) {
            for (Eigen::Index d = 0; d < dim; ++d) h.lag(p)(d, d) = draw();
            for (std::size_t i = 0; i < interactions; ++i)
                h.lag(p)(pairs[i].first, pairs[i].second) = draw();
        }
        const double rho = h.spectral_radius();
        if (rho > kStableSpectralRadius) {
            // H(p) <- g^p H(p) scales every companion eigenvalue by g
            const double g = kStableSpectralRadius / rho * (1.0 - 1e-9);
            double gp = 1.0;
            for (std::size_t p = 1; p <= order; ++p) {
                gp *= g;
                h.lag(p) *= gp;
            }
        }
        if (h.spectral_radius() > kStableSpectralRadius) continue;
        bool detectable = true;
        for (std::size_t i = 0; i < interactions && detectable; ++i)
            detectable = h.group_norm(pairs[i].first, pairs[i].second) >= kDetectableGroupNorm;
        if (detectable) return h;
    }
    throw SamplingError("no stable MVAR with detectable interactions after " +
                        std::to_string(kMaxAttempts) + " draws");
}

Vector sample_stable_ar(std::size_t order, std::uint64_t seed) {
    if (order < 1) throw UsageError("AR order must be at least 1");
    Rng rng(seed);
    std::uniform_real_distribution<double> first(0.3, 0.9);
    std::uniform_real_distribution<double> rest(-0.5, 0.5);
    // Levinson step-up on reflection coefficients; the first one equals the
    // lag-1 autocorrelation in this sign convention.
    Vector c(static_cast<Eigen::Index>(order));
    Vector prev;
    for (std::size_t m = 1; m <= order; ++m) {
        const double k = (m == 1) ? first(rng) : rest(rng);
        Vector next(static_cast<Eigen::Index>(m));
        for (std::size_t j = 1; j < m; ++j) next(j - 1) = prev(j - 1) - k * prev(m - j - 1);
        next(m - 1) = k;
        prev = next;
    }
    c = prev;
    return c;
}

NoisyObservation apply_noise(const Matrix& clean, const Matrix& mixing, NoiseKind kind, double snr,
                             std::size_t noise_ar_order, std::uint64_t seed,
                             Eigen::Index ambient_sources) {
    const Eigen::Index sensors = clean.rows();
    const Eigen::Index samples = clean.cols();
    if (kind == NoiseKind::N0) return {clean, Matrix::Zero(sensors, samples)};
    if (!(snr > 0.0 && std::isfinite(snr))) throw UsageError("snr must be positive and finite");
    if (mixing.rows() != sensors) throw ShapeError("mixing rows must match sensor count");

    Rng rng(seed);
    Eigen::Index count = 0;
    Matrix spread;  // maps noise sources onto sensors
    switch (kind) {
        case NoiseKind::N1:
        case NoiseKind::N4:
            count = sensors;
            break;
        case NoiseKind::N2:
        case NoiseKind::N5:
            count = mixing.cols();
            spread = mixing;
            break;
        default:
            if (ambient_sources < 1) throw UsageError("ambient source count must be positive");
            count = ambient_sources;
            spread = gaussian_matrix(sensors, count, rng);
            break;
    }

    Matrix raw(count, samples);
    if (is_temporally_correlated(kind)) {
        for (Eigen::Index i = 0; i < count; ++i) {
            const Vector c = sample_stable_ar(noise_ar_order, derive_seed(seed, {1, std::uint64_t(i)}));
            raw.row(i) = ar_series(c, samples, rng).transpose();
        }
    } else {
        raw = gaussian_matrix(count, samples, rng);
    }
    Matrix noise = spread.size() ? Matrix(spread * raw) : raw;
    const double nn = noise.norm();
    if (!(nn > 0.0)) throw NumericError("generated noise has zero energy");
    noise *= clean.norm() / (snr * nn);
    return {clean + noise, noise};
}

Dataset generate(const SimulationSpec& spec) {
    spec.validate();
    const Eigen::Index dim = spec.sources;

    Dataset ds;
    ds.spec = spec;
    ds.true_h = sample_sparse_mvar(dim, spec.order, spec.interactions,
                                   derive_seed(spec.seed, {kCoefficients}));
    ds.true_support = support_of(ds.true_h);
    auto sim = simulate_sources(ds.true_h, spec.samples, sech_sampler(),
                                derive_seed(spec.seed, {kSources}));
    ds.sources = sim.sources;

    Rng mix_rng(derive_seed(spec.seed, {kMixing}));
    for (int attempt = 0;; ++attempt) {
        if (attempt >= kMaxAttempts)
            throw SamplingError("no well-conditioned mixing after " +
                                std::to_string(kMaxAttempts) + " draws");
        Matrix m = gaussian_matrix(spec.sensors, dim, mix_rng);
        if (condition_number(m) >= kMaxMixingCondition) continue;

        const Matrix clean = m * ds.sources.data();
        auto obs = apply_noise(clean, m, spec.noise, spec.snr, spec.noise_ar_order,
                               derive_seed(spec.seed, {kNoise, std::uint64_t(attempt)}),
                               spec.ambient_sources);

        // Uncentered PCA: leading eigenvectors of X X^T.
        const Matrix cov = obs.observed * obs.observed.transpose() / double(spec.samples);
        Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
        if (eig.info() != Eigen::Success) throw NumericError("PCA eigen-decomposition failed");
        Matrix u(spec.sensors, dim);
        for (Eigen::Index k = 0; k < dim; ++k) {
            Vector v = eig.eigenvectors().col(spec.sensors - 1 - k);
            Eigen::Index arg = 0;
            v.cwiseAbs().maxCoeff(&arg);
            if (v(arg) < 0) v = -v;
            u.col(k) = v;
        }
        const Matrix eff = u.transpose() * m;
        const double cond = condition_number(eff);
        if (!(cond < kMaxMixingCondition)) continue;

        ds.x = TimeSeries(u.transpose() * obs.observed);
        ds.true_mixing = MixingMatrix(eff);
        ds.projection = u.transpose();
        ds.sensor_mixing = m;

        auto& md = ds.metadata;
        md.seed = spec.seed;
        md.library_version = kLibraryVersion;
        md.spectral_radius = ds.true_h.spectral_radius();
        md.mixing_condition = cond;
        md.burn_in = minimum_burn_in(spec.order);
        md.innovation_density = "(1/pi) sech(x)";
        md.coefficient_scheme =
            "diagonal plus uniformly chosen off-diagonal groups; entries uniform in +-[0.1, 0.5]; "
            "lag p scaled by g^p to spectral radius <= 0.95; interaction group norms >= 0.1";
        md.mixing_scheme = "standard normal sensors x sources, condition number < 1e3";
        md.noise_scheme = to_string(spec.noise);
        if (spec.noise == NoiseKind::N0) {
            md.realized_snr = std::numeric_limits<double>::quiet_NaN();
        } else {
            md.snr = spec.snr;
            md.realized_snr = clean.norm() / obs.noise.norm();
        }
        return ds;
    }
}

}  // namespace scsa
