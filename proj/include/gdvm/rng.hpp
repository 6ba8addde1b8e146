#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace gdvm {

// All stochastic pieces of a run (init, shuffling, latent noise, dropout)
// draw from independent named streams derived from one run seed, so variants
// that skip a stream (e.g. Baseline never samples epsilon) still see
// identical draws on the streams they share.
std::mt19937_64 seeded_stream(std::uint64_t seed, std::string_view purpose);

void fill_normal(std::mt19937_64& rng, std::span<double> out,
                 double mean = 0.0, double stddev = 1.0);
void fill_uniform(std::mt19937_64& rng, std::span<double> out,
                  double lo, double hi);

// Inverse standard-normal CDF via bisection on std::erf; |err| < 1e-12.
double normal_quantile(double p);

}  // namespace gdvm
