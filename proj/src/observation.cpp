#include "jsdm/observation.hpp"

#include "jsdm/errors.hpp"
#include "jsdm/special.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

namespace jsdm {

int GroupStructure::species() const {
  int n = 0;
  for (const auto& g : members) n += static_cast<int>(g.size());
  return n;
}

std::vector<int> GroupStructure::group_of_species() const {
  std::vector<int> out(static_cast<std::size_t>(species()), -1);
  for (std::size_t g = 0; g < members.size(); ++g)
    for (int j : members[g]) out.at(static_cast<std::size_t>(j)) = static_cast<int>(g);
  return out;
}

void GroupStructure::validate(int n_species) const {
  if (members.empty()) throw ValidationError("group structure has no groups");
  std::vector<int> seen(static_cast<std::size_t>(n_species), 0);
  for (std::size_t g = 0; g < members.size(); ++g) {
    if (members[g].empty())
      throw ValidationError("group " + std::to_string(g) + " is empty");
    for (int j : members[g]) {
      if (j < 0 || j >= n_species)
        throw ValidationError("group " + std::to_string(g) + " references unknown species " +
                              std::to_string(j));
      if (seen[static_cast<std::size_t>(j)]++)
        throw ValidationError("species " + std::to_string(j) + " belongs to several groups");
    }
  }
  for (int j = 0; j < n_species; ++j)
    if (!seen[static_cast<std::size_t>(j)])
      throw ValidationError("species " + std::to_string(j) + " belongs to no group");
  if (resolution.cols() != groups())
    throw ValidationError("resolution table has wrong number of groups");
  for (Eigen::Index i = 0; i < resolution.rows(); ++i)
    for (Eigen::Index g = 0; g < resolution.cols(); ++g)
      if (resolution(i, g) < 1) {
        std::ostringstream msg;
        msg << "resolution N must be >= 1 (plot " << i << ", group " << g << ")";
        throw ValidationError(msg.str());
      }
}

GroupStructure GroupStructure::singletons() const {
  GroupStructure out;
  const auto owner = group_of_species();
  out.resolution.resize(resolution.rows(), static_cast<Eigen::Index>(owner.size()));
  for (std::size_t j = 0; j < owner.size(); ++j) {
    out.members.push_back({static_cast<int>(j)});
    out.resolution.col(static_cast<Eigen::Index>(j)) = resolution.col(owner[j]);
  }
  return out;
}

std::vector<double> softmax_alpha(std::span<const double> f) {
  std::vector<double> out(f.size() + 1);
  double mx = 0.0;  // the empty class has latent 0
  for (double v : f) mx = std::max(mx, v);
  double total = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) {
    out[j] = std::exp(f[j] - mx);
    total += out[j];
  }
  out.back() = std::exp(-mx);
  total += out.back();
  for (auto& v : out) v /= total;
  return out;
}

namespace {

int check_counts(std::span<const int> y, int trials, std::span<const double> alpha,
                 double gamma) {
  if (alpha.size() != y.size() + 1)
    throw ValidationError("alpha must have one entry per species plus the empty class");
  if (!(gamma > 0.0)) throw DomainError("concentration gamma must be positive");
  if (trials < 0) throw ValidationError("N must be nonnegative");
  int total = 0;
  for (int v : y) {
    if (v < 0) throw ValidationError("negative count");
    total += v;
  }
  if (total > trials) throw ValidationError("counts exceed N");
  return trials - total;
}

}  // namespace

double dirmult_logpmf(std::span<const int> y, int trials, std::span<const double> alpha,
                      double gamma) {
  const int empty = check_counts(y, trials, alpha, gamma);
  if (trials == 0) return 0.0;
  double lp = log_gamma(trials + 1.0) - log_rising(gamma, trials);
  const std::size_t k = y.size();
  for (std::size_t c = 0; c <= k; ++c) {
    const int yc = c < k ? y[c] : empty;
    lp += log_rising(alpha[c] * gamma, yc) - log_gamma(yc + 1.0);
  }
  return lp;
}

DirMultGrad dirmult_logpmf_grad(std::span<const int> y, int trials,
                                std::span<const double> alpha, double gamma) {
  const int empty = check_counts(y, trials, alpha, gamma);
  DirMultGrad out;
  const std::size_t k = y.size();
  out.d_alpha.assign(k + 1, 0.0);
  if (trials == 0) return out;
  out.value = log_gamma(trials + 1.0) - log_rising(gamma, trials);
  out.d_gamma = -digamma_rising(gamma, trials);
  for (std::size_t c = 0; c <= k; ++c) {
    const int yc = c < k ? y[c] : empty;
    const double a = alpha[c] * gamma;
    out.value += log_rising(a, yc) - log_gamma(yc + 1.0);
    const double da = digamma_rising(a, yc);
    out.d_alpha[c] = gamma * da;
    out.d_gamma += alpha[c] * da;
  }
  return out;
}

double betabinom_logpmf(int y, int trials, double alpha, double gamma) {
  if (!(gamma > 0.0)) throw DomainError("concentration gamma must be positive");
  if (y < 0 || y > trials) throw ValidationError("count outside [0, N]");
  if (trials == 0) return 0.0;
  const int empty = trials - y;
  return log_gamma(trials + 1.0) - log_rising(gamma, trials) + log_rising(alpha * gamma, y) -
         log_gamma(y + 1.0) + log_rising((1.0 - alpha) * gamma, empty) - log_gamma(empty + 1.0);
}

double competition_corr(double alpha_a, double alpha_b) {
  if (!(alpha_a > 0.0 && alpha_a < 1.0 && alpha_b > 0.0 && alpha_b < 1.0) ||
      !(alpha_a + alpha_b <= 1.0))
    throw DomainError("competition_corr: arguments must lie in the open simplex");
  return -std::sqrt(alpha_a * alpha_b / ((1.0 - alpha_a) * (1.0 - alpha_b)));
}

std::vector<double> sample_phi_posterior(std::span<const int> y, int trials,
                                         std::span<const double> alpha, double gamma, Rng& rng) {
  const int empty = check_counts(y, trials, alpha, gamma);
  std::vector<double> conc(alpha.size());
  for (std::size_t c = 0; c < alpha.size(); ++c)
    conc[c] = alpha[c] * gamma + (c < y.size() ? y[c] : empty);
  return dirichlet_draw(rng, conc);
}

std::vector<int> sample_y(int trials, std::span<const double> alpha, double gamma, Rng& rng) {
  if (!(gamma > 0.0)) throw DomainError("concentration gamma must be positive");
  std::vector<double> conc(alpha.begin(), alpha.end());
  for (auto& v : conc) v *= gamma;
  const auto phi = dirichlet_draw(rng, conc);
  auto counts = multinomial_draw(rng, trials, phi);
  counts.pop_back();
  return counts;
}

}  // namespace jsdm
