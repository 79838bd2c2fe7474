#pragma once

#include "jsdm/model.hpp"
#include "jsdm/sampler.hpp"
#include "jsdm/validation.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace jsdm {

struct ScenarioOptions {
  int replicates = 100;
  int plots = 100;
  int species = 3;  // all in one exclusive group
  int trials = 100;
  double extent = 100.0;
  std::uint64_t seed = 1;
  int threads = 1;  // replicates run in parallel, chains serially
  SamplerConfig sampler;
};

// Fixed spatial truth for the correlation and misfit scenarios.
struct SpatialTruth {
  std::vector<double> beta;
  double gamma = 5.0;
  double length_scale = 30.0;
  std::vector<double> omega;
  Matrix correlation;
};

SpatialTruth strong_correlation_truth(int species);  // mixed-sign correlations
SpatialTruth shared_niche_truth(int species);        // positive correlations

// Unconstrained LMC(1) stationary parameter vector for `truth`, latent
// coordinates drawn from rng.
Vector lmc_theta(const Model& model, const SpatialTruth& truth, Rng& rng);

struct RecoveryReport {
  std::string model;
  double level = 0.9;
  int replicates = 0;
  std::vector<std::string> names;
  std::vector<int> covered;      // per parameter
  std::vector<double> max_rhat;  // per replicate
};
// C-DM truths drawn from the prior; central intervals of every intercept and
// of log gamma checked against the truth.
RecoveryReport scenario_recovery(const ScenarioOptions& options, double level = 0.9);

struct CorrelationReport {
  Matrix truth;
  std::vector<Matrix> posterior_mean;  // per replicate
  std::vector<double> max_error;
  std::vector<double> max_rhat;
};
// LMC1-S-DM fitted to data from strong_correlation_truth.
CorrelationReport scenario_correlation(const ScenarioOptions& options);

struct MisfitOptions {
  ScenarioOptions scenario;
  std::string dm_model = "LMC1-S-DM";
  std::string bb_model = "LMC1-S-BB";
  int folds = 5;
  int max_draws = 200;
  int bootstrap = 200;
};

struct MisfitReplicate {
  std::array<CriterionEstimate, 4> dm, bb;
};

struct MisfitReport {
  std::string dm_model, bb_model;
  std::vector<MisfitReplicate> replicates;

  int dm_wins(int criterion) const;  // 0-based criterion index
  // replicates where |CV1(DM) - CV1(BB)| <= max(se_DM, se_BB)
  int cv1_within_se() const;
  bool all_nonpositive() const;
};
// Data from shared_niche_truth with a DM observation process, fitted with
// both observation models and scored by K-fold CV.
MisfitReport scenario_misfit(const MisfitOptions& options);

struct Timing {
  std::string label;
  int n = 0;
  double seconds = 0.0;  // per evaluation, median of repeats
};

// Log posterior + gradient for one configuration: n plots, J species split
// into exclusive groups of at most five.
Timing bench_log_posterior(const std::string& model, int plots, int species, int repeats,
                           std::uint64_t seed);

struct ScalingReport {
  std::vector<Timing> timings;
  double slope = 0.0;  // least-squares log-log slope
  std::vector<Timing> reference;  // plain dense Cholesky at the same sizes
  double reference_slope = 0.0;
};
// Non-stationary kernel rebuild: length-scale field, kernel matrix and both
// Cholesky factors at each n.
ScalingReport bench_nonstationary_scaling(const std::vector<int>& sizes, int repeats,
                                          std::uint64_t seed);

struct CovBench {
  int n = 0;
  double library_seconds = 0.0;   // assemble_cov with exp_cov
  double naive_seconds = 0.0;     // hand-written double loop
  double factored_seconds = 0.0;  // build_cov_matrix, assembly + jittered Cholesky
  double max_difference = 0.0;
};
CovBench bench_cov_matrix(int n, int repeats, std::uint64_t seed);

struct PipelineCheck {
  std::string model;
  bool ok = false;
  std::string error;
  double seconds = 0.0;
};
// fit -> predict -> cv -> pit for every table configuration on one synthetic
// dataset of `plots` plots and three species.
std::vector<PipelineCheck> pipeline_all_models(int plots, std::uint64_t seed, int threads);

void write_recovery(const RecoveryReport& r, const std::string& dir);
void write_correlation(const CorrelationReport& r, const std::string& dir);
void write_misfit(const MisfitReport& r, const std::string& dir);
void write_bench(const std::vector<Timing>& timings, const ScalingReport& scaling,
                 const CovBench& cov, const std::string& dir);
void write_pipeline(const std::vector<PipelineCheck>& checks, const std::string& dir);

}  // namespace jsdm
