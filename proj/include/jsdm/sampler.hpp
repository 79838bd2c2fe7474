#pragma once

#include "jsdm/linalg.hpp"
#include "jsdm/random.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace jsdm {

class Model;

// log density and its gradient; returns -inf for rejected states.
using LogDensityFn = std::function<double(const Vector& theta, Vector& grad)>;

struct SamplerConfig {
  int chains = 4;
  int iterations = 2000;  // per chain, including warmup
  int warmup = 1000;
  double target_accept = 0.8;
  // Leapfrog count is ceil(integration_time / step), capped, then jittered
  // uniformly over [ceil(L/2), floor(3L/2)].
  double integration_time = 2.0;
  int max_leapfrog = 256;
  double init_radius = 2.0;  // uniform(-r, r) on the unconstrained scale
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = one per chain

  void validate() const;
};

struct HmcTransition {
  Vector theta;
  double log_density = 0.0;
  Vector grad;
  double accept_prob = 0.0;
  bool accepted = false;
  bool divergent = false;
  double energy_error = 0.0;
  int steps = 0;
};

// One Metropolis-corrected leapfrog trajectory.  inv_mass is the diagonal of
// the inverse metric.  steps == 0 returns the current state with accept 1.
HmcTransition hmc_draw(const Vector& theta, double log_density, const Vector& grad,
                       const LogDensityFn& f, double step_size, const Vector& inv_mass,
                       int steps, Rng& rng);

// Nesterov dual averaging of log step size towards a target acceptance.
class DualAveraging {
 public:
  DualAveraging(double target, double initial_step);
  void restart(double initial_step);
  double update(double accept_prob);  // returns the next step size
  double final_step() const;          // exp(x_bar)

 private:
  double target_, mu_ = 0.0, s_bar_ = 0.0, x_bar_ = 0.0;
  int counter_ = 0;
  double step_ = 1.0;
};

// Warmup schedule: initial fast buffer, doubling slow windows that end with a
// metric update, terminal fast buffer.
struct WarmupSchedule {
  int init_buffer = 75;
  int term_buffer = 50;
  int base_window = 25;
  std::vector<int> window_ends;  // iterations (exclusive) where the metric updates

  static WarmupSchedule make(int warmup);
};

struct ChainResult {
  Matrix draws;  // post-warmup draws x dim
  Vector log_density;
  std::vector<double> accept_prob;
  std::vector<int> steps;
  int divergences = 0;  // post-warmup
  int warmup_divergences = 0;
  double step_size = 0.0;
  Vector inv_mass;
};

struct ParameterSummary {
  std::string name;
  double mean = 0.0, sd = 0.0, q05 = 0.0, q50 = 0.0, q95 = 0.0;
  double rhat = 1.0, split_rhat = 1.0, ess = 0.0;
  bool degenerate = false;
};

struct PosteriorRun {
  std::string model_name;
  std::string spec_hash;
  std::vector<std::string> names;
  SamplerConfig config;
  std::vector<ChainResult> chains;
  long failed_evaluations = 0;

  int dimension() const { return static_cast<int>(names.size()); }
  int draws_per_chain() const;
  Matrix pooled() const;  // chain-major stack of all draws
  std::vector<ParameterSummary> summary() const;
  int divergences() const;
  double mean_accept() const;
};

PosteriorRun run_sampler(const LogDensityFn& f, int dim, const SamplerConfig& config,
                         const std::function<Vector(Rng&)>& init = {});
PosteriorRun run(const Model& model, const SamplerConfig& config);

// Potential scale reduction sqrt(1 + B / (n W)) over >= 2 chains of equal
// length.  Exactly 1 for identical chains and for constant chains.
double rhat(const std::vector<std::span<const double>>& chains);
// Same on the first and second half of every chain.
double split_rhat(const std::vector<std::span<const double>>& chains);

struct EssEstimate {
  double ess = 0.0;
  bool degenerate = false;  // zero variance
};
// Geyer initial monotone sequence estimator.  Requires length >= 4.
EssEstimate ess_geyer(std::span<const double> chain);
// Multi-chain version combining within-chain autocovariances with the
// between-chain variance.
EssEstimate ess_multichain(const std::vector<std::span<const double>>& chains);

// Draw store: <dir>/draws.bin (little-endian float64, row-major, chain-major
// rows, columns = lp__ followed by the parameters), <dir>/draws.json header
// and <dir>/draws.csv.
void write_draws(const PosteriorRun& run, const std::string& dir);
PosteriorRun read_draws(const std::string& dir);
// Per-parameter diagnostics table as CSV.
void write_summary_csv(const PosteriorRun& run, const std::string& path);

}  // namespace jsdm
