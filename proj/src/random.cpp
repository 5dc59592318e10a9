#include "scsa/random.hpp"

#include <cmath>
#include <numbers>

namespace scsa {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> stream) {
    std::uint64_t h = splitmix64(master);
    for (auto s : stream) h = splitmix64(h ^ splitmix64(s + 0x632be59bd9b4e019ULL));
    return h;
}

double sample_sech(Rng& rng) {
    // u in the open interval (0, 1) so tan() stays finite.
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double u = unif(rng);
    while (u <= 0.0) u = unif(rng);
    return std::asinh(std::tan(std::numbers::pi * (u - 0.5)));
}

double sech_cdf(double x) { return 2.0 / std::numbers::pi * std::atan(std::exp(x)); }

Matrix sample_matrix(Eigen::Index rows, Eigen::Index cols, const Sampler& sampler, Rng& rng) {
    Matrix m(rows, cols);
    // Column-major fill keeps the draw order time-major for signals.
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = sampler(rng);
    return m;
}

Sampler gaussian_sampler() {
    return [](Rng& rng) {
        std::normal_distribution<double> n(0.0, 1.0);
        return n(rng);
    };
}

}  // namespace scsa
