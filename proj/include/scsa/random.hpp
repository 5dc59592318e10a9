#pragma once

#include "scsa/types.hpp"

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>

namespace scsa {

using Rng = std::mt19937_64;

/// Mixes a master seed with any number of stream identifiers (splitmix64).
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> stream);

/// Inverse-CDF draw from the density (1/pi) sech(x).
double sample_sech(Rng& rng);

/// CDF of the (1/pi) sech(x) density: (2/pi) atan(exp(x)).
double sech_cdf(double x);

/// Draws a rows x cols matrix of i.i.d. samples.
using Sampler = std::function<double(Rng&)>;
Matrix sample_matrix(Eigen::Index rows, Eigen::Index cols, const Sampler& sampler, Rng& rng);

inline Sampler sech_sampler() { return [](Rng& rng) { return sample_sech(rng); }; }
Sampler gaussian_sampler();

}  // namespace scsa
