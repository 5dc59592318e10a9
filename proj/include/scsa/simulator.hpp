#pragma once

// Benchmark datasets: sparse stable MVAR sources with sech innovations,
// random instantaneous mixing into sensors, one of seven noise regimes at a
// fixed Frobenius SNR, and PCA reduction back to the source dimension.

#include "scsa/types.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace scsa {

/// N0: none. N1/N4: independent per sensor. N2/N5: per source, mixed by M.
/// N3/N6: ambient sources mixed by an independent random matrix.
/// N1-N3 are white in time, N4-N6 follow univariate AR processes.
enum class NoiseKind { N0, N1, N2, N3, N4, N5, N6 };

std::string to_string(NoiseKind k);
NoiseKind parse_noise_kind(const std::string& s);
inline bool is_temporally_correlated(NoiseKind k) {
    return k == NoiseKind::N4 || k == NoiseKind::N5 || k == NoiseKind::N6;
}

struct SimulationSpec {
    Eigen::Index sources = 7;
    std::size_t order = 4;
    Eigen::Index samples = 2000;
    std::size_t interactions = 7;
    NoiseKind noise = NoiseKind::N0;
    double snr = 2.0;
    std::size_t noise_ar_order = 20;
    Eigen::Index sensors = 32;
    Eigen::Index ambient_sources = 64;
    std::uint64_t seed = 0;

    void validate() const;
};

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct DatasetMetadata {
    std::uint64_t seed = 0;
    std::string library_version;
    std::optional<double> snr;       ///< absent for N0
    double realized_snr = 0.0;       ///< NaN for N0
    double spectral_radius = 0.0;
    double mixing_condition = 0.0;
    std::string innovation_density;
    std::string coefficient_scheme;
    std::string mixing_scheme;
    std::string noise_scheme;
    std::size_t burn_in = 0;
};

struct Dataset {
    TimeSeries x;                 ///< observed, after noise and PCA (D x T)
    MixingMatrix true_mixing;     ///< effective D x D mixing (projection . sensor mixing)
    MvarCoefficients true_h;
    BoolMatrix true_support;      ///< off-diagonal groups that are nonzero
    SimulationSpec spec;
    DatasetMetadata metadata;
    TimeSeries sources;           ///< clean simulated sources (D x T)
    Matrix projection;            ///< D x sensors PCA projection
    Matrix sensor_mixing;         ///< sensors x D
};

/// Sparse stable MVAR: all diagonal groups and `interactions` uniformly chosen
/// off-diagonal groups are nonzero at every lag.
MvarCoefficients sample_sparse_mvar(Eigen::Index dim, std::size_t order, std::size_t interactions,
                                    std::uint64_t seed);

BoolMatrix support_of(const MvarCoefficients& h);

struct NoisyObservation {
    Matrix observed;  ///< clean + noise
    Matrix noise;     ///< sensor-space noise after scaling
};

/// Adds noise of `kind` to sensor signals clean = M s so that
/// ||clean||_F / ||noise||_F = snr.
NoisyObservation apply_noise(const Matrix& clean, const Matrix& mixing, NoiseKind kind, double snr,
                             std::size_t noise_ar_order, std::uint64_t seed,
                             Eigen::Index ambient_sources = 64);

/// AR coefficients c(1..order) of a stable process x(t) = sum c(j) x(t-j) + e(t)
/// drawn through reflection coefficients; lag-1 autocorrelation is in [0.3, 0.9].
Vector sample_stable_ar(std::size_t order, std::uint64_t seed);

Dataset generate(const SimulationSpec& spec);

}  // namespace scsa
