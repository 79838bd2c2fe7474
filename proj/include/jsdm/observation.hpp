#pragma once

#include "jsdm/random.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace jsdm {

// Partition of species into mutually exclusive groups plus the per-plot,
// per-group measurement resolution N (number of mesh points).
struct GroupStructure {
  std::vector<std::vector<int>> members;  // species indices per group
  Eigen::MatrixXi resolution;             // plots x groups, N >= 1

  int groups() const { return static_cast<int>(members.size()); }
  int species() const;
  // group index of each species
  std::vector<int> group_of_species() const;

  // Throws ValidationError unless the groups partition 0..J-1 and N >= 1.
  void validate(int n_species) const;

  // Every species in its own group, inheriting its original group's N.
  GroupStructure singletons() const;
};

// Expected covers for one group at one plot: species entries followed by the
// empty class; sums to one.
std::vector<double> softmax_alpha(std::span<const double> f);

// log of the Dirichlet-Multinomial pmf for species counts y (the empty count
// is N - sum y), expected covers alpha (species..., empty) and total
// concentration gamma.  Throws ValidationError if sum y > N or y < 0 and
// DomainError if gamma <= 0.
double dirmult_logpmf(std::span<const int> y, int trials, std::span<const double> alpha,
                      double gamma);

// Gradient of dirmult_logpmf with respect to alpha (all classes) and gamma.
struct DirMultGrad {
  double value = 0.0;
  std::vector<double> d_alpha;
  double d_gamma = 0.0;
};
DirMultGrad dirmult_logpmf_grad(std::span<const int> y, int trials,
                                std::span<const double> alpha, double gamma);

// Singleton group (Beta-Binomial): alpha is the species' expected cover.
double betabinom_logpmf(int y, int trials, double alpha, double gamma);

// Correlation of two species' covers within a group, -sqrt(a b / ((1-a)(1-b))).
double competition_corr(double alpha_a, double alpha_b);

// Draw covers from the conjugate posterior Dirichlet(alpha * gamma + y);
// returns species covers followed by the empty class.
std::vector<double> sample_phi_posterior(std::span<const int> y, int trials,
                                         std::span<const double> alpha, double gamma, Rng& rng);

// Generative draw: phi ~ Dir(alpha gamma), y ~ Multinomial(N, phi).  Returns
// species counts only (the empty count is N - sum).
std::vector<int> sample_y(int trials, std::span<const double> alpha, double gamma, Rng& rng);

}  // namespace jsdm
