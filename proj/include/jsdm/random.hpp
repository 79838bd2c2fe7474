#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace jsdm {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent streams from a seed.
std::uint64_t mix64(std::uint64_t x);

// Deterministic stream for (seed, a, b): chains/iterations, folds/draws, ...
Rng make_stream(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0);

// Uniform integer in [0, bound) without relying on the library's
// (implementation-defined) uniform_int_distribution.
std::uint64_t uniform_index(Rng& rng, std::uint64_t bound);

// Uniform double in (0, 1).
double uniform_open(Rng& rng);

double standard_normal(Rng& rng);

// log of a Gamma(shape, 1) variate; accurate for very small shapes.
double log_gamma_variate(Rng& rng, double shape);

// Dirichlet draw; output has the same length as `concentration`.
std::vector<double> dirichlet_draw(Rng& rng, std::span<const double> concentration);

// Multinomial counts for N trials over probabilities p (summing to 1).
std::vector<int> multinomial_draw(Rng& rng, int trials, std::span<const double> p);

// Fisher-Yates permutation of 0..n-1.
std::vector<int> random_permutation(Rng& rng, int n);

}  // namespace jsdm
