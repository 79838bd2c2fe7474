#pragma once

#include "jsdm/dataset.hpp"
#include "jsdm/linalg.hpp"
#include "jsdm/priors.hpp"

#include <atomic>
#include <memory>
#include <string>
#include <vector>

namespace jsdm {

enum class LatentKind { Constant, Independent, Coregionalized };
enum class KernelKind { Stationary, NonStationary };
enum class ObservationKind { BetaBinomial, DirichletMultinomial };

// One model configuration: latent structure x kernel x observation process.
struct ModelSpec {
  LatentKind latent = LatentKind::Constant;
  int k_distinct = 1;  // LMC(k)
  KernelKind kernel = KernelKind::Stationary;
  ObservationKind observation = ObservationKind::DirichletMultinomial;
  PriorConfig priors;
  // Optional LMC component -> kernel map; empty selects lmc_kernel_map(J, k).
  std::vector<int> kernel_of_component;
  double rel_jitter = 1e-8;

  // Accepts names like "C-DM", "IGP-NS-BB", "LMC1-S-DM" (also "LMC(1)_S+DM").
  static ModelSpec from_name(const std::string& name);
  std::string name() const;
  // The twelve compared configurations, in table order.
  static std::vector<std::string> table_names();

  bool spatial() const { return latent != LatentKind::Constant; }
  void validate(int n_species) const;
};

// Block layout of the flat unconstrained parameter vector.
struct ParameterLayout {
  int species = 0;
  int plots = 0;
  int obs_groups = 0;  // groups of the observation model (J for BB)
  int kernels = 0;     // distinct covariance functions
  bool nonstationary = false;
  LatentKind latent = LatentKind::Constant;

  int beta = 0;
  int log_gamma = 0;
  int kernel_params = 0;  // kernels x (1 for S, 3 for NS)
  int log_sd = -1;        // IGP magnitudes
  int log_omega = -1;     // LMC
  int corr_free = -1;     // LMC, J(J-1)/2
  int z_field = -1;       // NS: kernels x plots
  int z = -1;             // J x plots, species-major
  int dim = 0;

  int params_per_kernel() const { return nonstationary ? 3 : 1; }
  std::vector<std::string> names() const;
};

ParameterLayout make_layout(const ModelSpec& spec, int species, int obs_groups, int plots);

// Sampler dimension for a spec on a dataset with the given shape.
int dimension(const ModelSpec& spec, int species, int declared_groups, int plots);

// Named view onto one flat unconstrained vector (copies).  pack() rebuilds
// the identical vector.
struct ParameterState {
  Vector beta;
  Vector log_gamma;
  Matrix kernel_params;  // kernels x params_per_kernel
  Vector log_sd;
  Vector log_omega;
  Vector corr_free;
  Matrix z_field;  // kernels x plots
  Matrix z;        // species x plots

  static ParameterState unpack(const ParameterLayout& layout, const Vector& theta);
  Vector pack(const ParameterLayout& layout) const;
};

// Per-kernel quantities at the data locations for one parameter vector.
struct KernelState {
  double length_scale = 0.0;  // stationary
  // non-stationary: log length-scale field
  double field_mean = 0.0;
  double field_length_scale = 0.0;
  double field_variance = 0.0;
  Vector field_z;
  Matrix field_chol;
  double field_jitter = 0.0;
  Vector length_scales;  // l at each data location
  // kernel matrix (unit variance, no jitter) and its factor
  Matrix cov;
  Matrix chol;
  double jitter = 0.0;
};

// Everything needed to extend a posterior draw to new locations.
struct LatentState {
  Vector beta;
  Vector gamma;                          // per observation group
  std::vector<KernelState> kernels;      // distinct kernels
  std::vector<int> kernel_of_component;  // component -> kernel
  Matrix mixing;  // eps = mixing * U (diag(sd) for IGP, diag(omega) L_Omega for LMC)
  Matrix z;       // whitened coordinates, components x plots
  Matrix u;       // chol_{kappa(c)} z_c, components x plots
  Matrix f;       // species x plots
};

// Joint unnormalized log posterior of one configuration on one dataset.
// Immutable after construction; safe to call concurrently.
class Model {
 public:
  Model(ModelSpec spec, const Dataset& data);

  int dimension() const { return layout_.dim; }
  const ParameterLayout& layout() const { return layout_; }
  const ModelSpec& spec() const { return spec_; }
  const GroupStructure& observation_groups() const { return obs_groups_; }
  const Dataset& data() const { return data_; }
  std::vector<std::string> parameter_names() const { return layout_.names(); }

  // -inf for states whose factorizations fail or that produce non-finite
  // values (counted in failures()).
  double log_posterior(const Vector& theta) const;
  double log_posterior_grad(const Vector& theta, Vector& grad) const;

  // Latent state at the data locations; throws NumericalError on failure.
  LatentState latent_state(const Vector& theta) const;

  // Draw an unconstrained parameter vector from the prior.
  Vector sample_prior(Rng& rng) const;

  long failures() const { return failures_->load(); }

 private:
  struct Workspace;
  bool forward(const Vector& theta, Workspace& ws) const;
  double likelihood(Workspace& ws, bool want_grad) const;
  void backward(const Vector& theta, Workspace& ws, Vector& grad) const;
  double evaluate(const Vector& theta, Vector* grad) const;

  ModelSpec spec_;
  Dataset data_;
  GroupStructure obs_groups_;
  ParameterLayout layout_;
  std::vector<int> kernel_of_component_;
  Matrix dist_;
  // Per (plot, observation group): counts incl. empty and log multinomial constant.
  std::vector<std::vector<int>> cell_counts_;
  std::vector<int> cell_trials_;
  std::vector<double> cell_const_;
  std::shared_ptr<std::atomic<long>> failures_;
};

}  // namespace jsdm
