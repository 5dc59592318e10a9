#pragma once

// Generative correlated-sources model: x(t) = M s(t), with s(t) an MVAR
// process driven by independent innovations, and the exact maps between the
// (B, H) and FIR filter-bank parameterizations.

#include "scsa/random.hpp"
#include "scsa/types.hpp"

#include <cstdint>
#include <optional>

namespace scsa {

/// W(0) = B, W(p) = -H(p) B.
FilterBank source_model_to_filter_bank(const SourceModel& model);

/// B = W(0), H(p) = -W(p) B^-1.
SourceModel filter_bank_to_source_model(const FilterBank& fb);

/// eps(t) = sum_p W(p) x(t - p) for t = P+1 .. T; returns D x (T - P).
TimeSeries innovations(const FilterBank& fb, const TimeSeries& x);

struct SimulatedSources {
    TimeSeries sources;
    TimeSeries innovations;
};

/// Default burn-in length for an order-P process.
inline std::size_t minimum_burn_in(std::size_t order) { return 10 * order; }

/// Runs s(t) = sum_p H(p) s(t-p) + eps(t). The first P samples are plain
/// innovations and `burn_in` samples (at least 10 P) are discarded before
/// recording. Throws StabilityError when the companion spectral radius
/// exceeds kStableSpectralRadius.
SimulatedSources simulate_sources(const MvarCoefficients& h, Eigen::Index samples,
                                  const Sampler& innovation_sampler, std::uint64_t seed,
                                  std::optional<std::size_t> burn_in = std::nullopt);

}  // namespace scsa
