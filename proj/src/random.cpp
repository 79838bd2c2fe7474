#include "jsdm/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace jsdm {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng make_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  const std::uint64_t key = mix64(mix64(mix64(seed) ^ (a + 0x632be59bd9b4e019ULL)) ^
                                  (b + 0x8cb92ba72f3d8dd7ULL));
  return Rng(key);
}

std::uint64_t uniform_index(Rng& rng, std::uint64_t bound) {
  if (bound <= 1) return 0;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % bound;
}

double uniform_open(Rng& rng) {
  // 53 random bits, shifted off zero.
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

double standard_normal(Rng& rng) {
  // Marsaglia polar method; deterministic across standard libraries.
  for (;;) {
    const double u = 2.0 * uniform_open(rng) - 1.0;
    const double v = 2.0 * uniform_open(rng) - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
  }
}

double log_gamma_variate(Rng& rng, double shape) {
  // Marsaglia-Tsang, with the shape < 1 boost G(a) = G(a + 1) U^{1/a}.
  double boost = 0.0;
  if (shape < 1.0) {
    boost = std::log(uniform_open(rng)) / shape;
    shape += 1.0;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = standard_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_open(rng);
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
      return std::log(d * v) + boost;
  }
}

std::vector<double> dirichlet_draw(Rng& rng, std::span<const double> concentration) {
  const std::size_t k = concentration.size();
  std::vector<double> logs(k);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i) {
    logs[i] = log_gamma_variate(rng, concentration[i]);
    mx = std::max(mx, logs[i]);
  }
  double total = 0.0;
  for (auto& v : logs) {
    v = std::exp(v - mx);
    total += v;
  }
  for (auto& v : logs) v /= total;
  return logs;
}

std::vector<int> multinomial_draw(Rng& rng, int trials, std::span<const double> p) {
  std::vector<int> out(p.size(), 0);
  int remaining = trials;
  double mass_left = 1.0;
  for (std::size_t i = 0; i + 1 < p.size() && remaining > 0; ++i) {
    const double q = mass_left > 0.0 ? std::clamp(p[i] / mass_left, 0.0, 1.0) : 0.0;
    // Binomial by inversion of Bernoulli trials is too slow for large N;
    // std::binomial_distribution is deterministic for a fixed library.
    std::binomial_distribution<int> bin(remaining, q);
    out[i] = bin(rng);
    remaining -= out[i];
    mass_left -= p[i];
  }
  if (!p.empty()) out.back() += remaining;
  return out;
}

std::vector<int> random_permutation(Rng& rng, int n) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  return perm;
}

}  // namespace jsdm
