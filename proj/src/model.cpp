#include "scsa/model.hpp"

#include "scsa/errors.hpp"

#include <algorithm>
#include <string>

namespace scsa {

FilterBank source_model_to_filter_bank(const SourceModel& model) {
    model.validate();
    FilterBank fb;
    fb.taps.reserve(model.order() + 1);
    fb.taps.push_back(model.demixing);
    for (std::size_t p = 1; p <= model.order(); ++p)
        fb.taps.push_back(-model.mvar.lag(p) * model.demixing);
    return fb;
}

SourceModel filter_bank_to_source_model(const FilterBank& fb) {
    fb.validate();
    const Matrix& b = fb.taps.front();
    const Eigen::PartialPivLU<Matrix> lu_t(b.transpose());
    std::vector<Matrix> lags;
    lags.reserve(fb.order());
    for (std::size_t p = 1; p <= fb.order(); ++p) {
        // H = -W B^-1  <=>  H^T = -B^-T W^T
        lags.push_back(-lu_t.solve(fb.taps[p].transpose()).transpose());
    }
    return SourceModel{b, MvarCoefficients(b.rows(), std::move(lags))};
}

TimeSeries innovations(const FilterBank& fb, const TimeSeries& x) {
    if (fb.taps.empty()) throw ShapeError("empty filter bank");
    if (fb.dim() != x.channels()) throw ShapeError("filter bank and data dimensions differ");
    const auto order = static_cast<Eigen::Index>(fb.order());
    const Eigen::Index n = x.samples() - order;
    if (n <= 0)
        throw InsufficientDataError("need more than " + std::to_string(order) + " samples");
    Matrix eps = Matrix::Zero(x.channels(), n);
    for (Eigen::Index p = 0; p <= order; ++p)
        eps.noalias() += fb.taps[static_cast<std::size_t>(p)] * x.data().middleCols(order - p, n);
    return TimeSeries(std::move(eps));
}

SimulatedSources simulate_sources(const MvarCoefficients& h, Eigen::Index samples,
                                  const Sampler& innovation_sampler, std::uint64_t seed,
                                  std::optional<std::size_t> burn_in) {
    const std::size_t order = h.order();
    const Eigen::Index dim = h.dim();
    if (dim <= 0) throw ShapeError("MVAR dimension must be positive");
    if (samples <= static_cast<Eigen::Index>(order))
        throw InsufficientDataError("simulation length must exceed the model order");
    const double radius = h.spectral_radius();
    if (radius > kStableSpectralRadius + 1e-12)
        throw StabilityError("companion spectral radius " + std::to_string(radius) +
                             " exceeds stability threshold");

    const std::size_t burn = std::max(burn_in.value_or(0), minimum_burn_in(order));
    const auto total = samples + static_cast<Eigen::Index>(burn);

    Rng rng(seed);
    Matrix eps = sample_matrix(dim, total, innovation_sampler, rng);
    Matrix s = eps;
    const auto p_max = static_cast<Eigen::Index>(order);
    for (Eigen::Index t = p_max; t < total; ++t)
        for (Eigen::Index p = 1; p <= p_max; ++p)
            s.col(t).noalias() += h.lag(static_cast<std::size_t>(p)) * s.col(t - p);

    const auto first = static_cast<Eigen::Index>(burn);
    return {TimeSeries(s.middleCols(first, samples)), TimeSeries(eps.middleCols(first, samples))};
}

}  // namespace scsa
