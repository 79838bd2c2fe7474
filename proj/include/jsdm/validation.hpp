#pragma once

#include "jsdm/dataset.hpp"
#include "jsdm/linalg.hpp"
#include "jsdm/model.hpp"
#include "jsdm/random.hpp"
#include "jsdm/sampler.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace jsdm {

struct FoldPlan {
  int folds = 10;
  std::uint64_t seed = 1;
  std::vector<int> fold_of_plot;

  std::vector<int> plots_in(int fold) const;
};

// Random partition of n plots into K folds whose sizes differ by at most one.
FoldPlan kfold_split(int n, int folds, std::uint64_t seed);

// Predictive draws at the held-out plots of one fold.
struct PredictiveDraw {
  Matrix f;      // species x held-out plots
  Vector gamma;  // per observation group
};

struct FoldPredictive {
  int fold = 0;
  std::vector<int> plots;     // indices into the full dataset
  Dataset heldout;
  GroupStructure obs_groups;  // observation groups with the held-out N
  std::vector<PredictiveDraw> draws;
  int chains = 1;  // draws are stored chain-major in equal blocks
};

// Per-unit, per-draw log predictive densities.  Blocks hold units x draws
// matrices, one block per fold (draws are only exchangeable within a fold).
struct CriterionDraws {
  std::vector<Matrix> blocks;
  std::vector<int> chains;  // per block
  // provenance per unit, block-major: species (-1 = all), plot (-1 = all), fold
  std::vector<std::array<int, 3>> units;
};

struct LogDensityTables {
  std::array<CriterionDraws, 4> cv;  // CV1..CV4
};

LogDensityTables log_density_tables(const std::vector<FoldPredictive>& folds);

// log (1/M) sum exp(v)
double log_mean_exp(const double* v, int n);

struct CriterionEstimate {
  double estimate = 0.0;
  double se = 0.0;  // sd over the averaged units / sqrt(#units)
  double me = 0.0;  // bootstrap Monte Carlo error
  int units = 0;
  int excluded = 0;        // units whose MC average underflowed to zero
  double min_ess = 0.0;    // smallest ESS of a unit's per-draw log density
  bool low_ess = false;
};

struct CvReport {
  std::string model;
  std::array<CriterionEstimate, 4> criteria;
  std::vector<std::string> species;
  std::vector<double> cv1_by_species, cv3_by_species;
  std::vector<std::string> warnings;
};

struct CvOptions {
  int bootstrap = 1000;
  std::uint64_t seed = 1;
  double min_ess = 50.0;
  int threads = 1;
};

CvReport cv_scores(const LogDensityTables& tables, const std::vector<std::string>& species,
                   const CvOptions& options);

// Bootstrap standard deviation of the criterion over replicates that
// resample the draws of every block with replacement.
double bootstrap_mc_error(const CriterionDraws& draws, int replicates, std::uint64_t seed);

// Randomized PIT: u = F(y - r_min) + v (F(y) - F(y - r_min)), with F := 0
// below the support.
double pit_randomized(int y, const std::function<double(int)>& cdf, int r_min, Rng& rng);

// F(y) = sum_{z <= y} (1/M) sum_m BB(z | N, alpha_m, gamma_m); 0 for y < 0.
double predictive_cdf_pointwise(int y, int trials, std::span<const double> alpha,
                                std::span<const double> gamma);

// Monte Carlo CDF of a sum: for every draw m, `inner` forward simulations
// of the summed quantity.  Returns {F(target - 1), F(target)}.
struct CdfPair {
  double below = 0.0;
  double at = 0.0;
};
CdfPair predictive_cdf_sum(int target, int draws, int inner,
                           const std::function<int(int draw, Rng& rng)>& simulate, Rng& rng);

struct PitValue {
  int variant = 1;  // 1..4
  int species = -1;
  int plot = -1;
  int fold = -1;
  double u = 0.0;
};

struct PitOptions {
  int inner = 100;  // forward simulations per draw for sums
  std::uint64_t seed = 1;
  int threads = 1;
};

std::vector<PitValue> pit_values(const std::vector<FoldPredictive>& folds, const PitOptions& options);

// Counts of u in equal bins over [0, 1].
std::vector<int> pit_histogram(const std::vector<PitValue>& values, int variant, int bins = 20);

struct CvRunOptions {
  int folds = 10;
  std::uint64_t seed = 1;
  int max_draws = 400;  // predictive draws per fold (thinned within chains)
  int threads = 1;
};

// Refit the model on every training split and draw latent predictions at
// the held-out plots (joint over the fold's plots).
std::vector<FoldPredictive> fold_predictives(const ModelSpec& spec, const Dataset& data,
                                             const FoldPlan& plan, const SamplerConfig& sampler,
                                             const CvRunOptions& options);

// Fold predictive structure for fixed parameters (one draw per entry of
// `thetas`) of a model already built on the training data.
FoldPredictive fold_predictive(const Model& model, const Dataset& data, std::span<const int> plots,
                               const Matrix& thetas, int chains, std::uint64_t seed, int fold = 0);

void write_cv_report(const CvReport& report, const std::string& dir);
std::string format_cv_table(const std::vector<CvReport>& reports);
void write_pit(const std::vector<PitValue>& values, const std::string& dir, int bins = 20);

}  // namespace jsdm
