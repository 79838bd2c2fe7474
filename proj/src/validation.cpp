#include "jsdm/validation.hpp"

#include "jsdm/errors.hpp"
#include "jsdm/observation.hpp"
#include "jsdm/parallel.hpp"
#include "jsdm/predict.hpp"
#include "jsdm/special.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace jsdm {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// observation-group alphas at one held-out plot (species..., empty)
std::vector<std::vector<double>> plot_alphas(const Matrix& f, int plot,
                                             const GroupStructure& groups) {
  std::vector<std::vector<double>> out;
  std::vector<double> fv;
  for (const auto& mem : groups.members) {
    fv.resize(mem.size());
    for (std::size_t a = 0; a < mem.size(); ++a) fv[a] = f(mem[a], plot);
    out.push_back(softmax_alpha(fv));
  }
  return out;
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  // shifted by v[0] so identical values give exactly zero
  double mean = 0.0;
  for (double x : v) mean += x - v[0];
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - v[0] - mean) * (x - v[0] - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

std::vector<int> FoldPlan::plots_in(int fold) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < fold_of_plot.size(); ++i)
    if (fold_of_plot[i] == fold) out.push_back(static_cast<int>(i));
  return out;
}

FoldPlan kfold_split(int n, int folds, std::uint64_t seed) {
  if (n < 1) throw ValidationError("kfold_split: need at least one plot");
  if (folds < 2 || folds > n) throw ValidationError("kfold_split: need 2 <= K <= n");
  FoldPlan plan;
  plan.folds = folds;
  plan.seed = seed;
  plan.fold_of_plot.assign(static_cast<std::size_t>(n), 0);
  Rng rng = make_stream(seed, 0x666f6c64ULL);
  const auto perm = random_permutation(rng, n);
  for (int p = 0; p < n; ++p) plan.fold_of_plot[static_cast<std::size_t>(perm[static_cast<std::size_t>(p)])] = p % folds;
  return plan;
}

double log_mean_exp(const double* v, int n) {
  if (n <= 0) return kNegInf;
  return log_sum_exp(v, n) - std::log(static_cast<double>(n));
}

LogDensityTables log_density_tables(const std::vector<FoldPredictive>& folds) {
  LogDensityTables t;
  for (const auto& fp : folds) {
    const int n = fp.heldout.plots();
    const int species = fp.heldout.species();
    const int m_draws = static_cast<int>(fp.draws.size());
    if (m_draws == 0) throw ValidationError("log_density_tables: fold without predictive draws");
    const auto& groups = fp.obs_groups;
    Matrix cv1(n * species, m_draws), cv2(n, m_draws), cv3(species, m_draws), cv4(1, m_draws);
    std::vector<int> y;
    for (int m = 0; m < m_draws; ++m) {
      const auto& d = fp.draws[static_cast<std::size_t>(m)];
      double total = 0.0;
      Vector by_species = Vector::Zero(species);
      for (int i = 0; i < n; ++i) {
        const auto alphas = plot_alphas(d.f, i, groups);
        double joint = 0.0;
        for (int g = 0; g < groups.groups(); ++g) {
          const auto& mem = groups.members[static_cast<std::size_t>(g)];
          const auto& alpha = alphas[static_cast<std::size_t>(g)];
          const int trials = groups.resolution(i, g);
          y.resize(mem.size());
          for (std::size_t a = 0; a < mem.size(); ++a) {
            y[a] = fp.heldout.counts(i, mem[a]);
            // single-species margin of the Dirichlet-Multinomial is Beta-Binomial
            const double lp = betabinom_logpmf(y[a], trials, alpha[a], d.gamma(g));
            cv1(i * species + mem[a], m) = lp;
            by_species(mem[a]) += lp;
          }
          joint += dirmult_logpmf(y, trials, alpha, d.gamma(g));
        }
        cv2(i, m) = joint;
        total += joint;
      }
      cv3.col(m) = by_species;
      cv4(0, m) = total;
    }
    for (int c = 0; c < 4; ++c) t.cv[static_cast<std::size_t>(c)].chains.push_back(fp.chains);
    t.cv[0].blocks.push_back(std::move(cv1));
    t.cv[1].blocks.push_back(std::move(cv2));
    t.cv[2].blocks.push_back(std::move(cv3));
    t.cv[3].blocks.push_back(std::move(cv4));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < species; ++j) t.cv[0].units.push_back({j, fp.plots[static_cast<std::size_t>(i)], fp.fold});
    for (int i = 0; i < n; ++i) t.cv[1].units.push_back({-1, fp.plots[static_cast<std::size_t>(i)], fp.fold});
    for (int j = 0; j < species; ++j) t.cv[2].units.push_back({j, -1, fp.fold});
    t.cv[3].units.push_back({-1, -1, fp.fold});
  }
  return t;
}

namespace {

// Criterion from per-unit log-mean-exp values; -inf units are excluded.
struct UnitScores {
  std::vector<double> values;  // finite units, in unit order
  std::vector<double> all;     // every unit (may contain -inf)
  int excluded = 0;
};

UnitScores unit_scores(const CriterionDraws& d) {
  UnitScores s;
  for (const auto& b : d.blocks) {
    for (Eigen::Index u = 0; u < b.rows(); ++u) {
      const Vector row = b.row(u).transpose();
      const double v = log_mean_exp(row.data(), static_cast<int>(row.size()));
      s.all.push_back(v);
      if (std::isfinite(v))
        s.values.push_back(v);
      else
        ++s.excluded;
    }
  }
  return s;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double unit_ess(const Matrix& block, Eigen::Index u, int chains) {
  const Eigen::Index m = block.cols();
  const Vector row = block.row(u).transpose();
  if (!row.allFinite()) return 0.0;
  if ((row.array() == row(0)).all()) return static_cast<double>(m);
  const int c = (chains >= 1 && m % chains == 0 && m / chains >= 4) ? chains : 1;
  if (m / c < 4) return static_cast<double>(m);
  std::vector<std::span<const double>> parts;
  const Eigen::Index len = m / c;
  for (int k = 0; k < c; ++k) parts.emplace_back(row.data() + k * len, static_cast<std::size_t>(len));
  const auto e = c > 1 ? ess_multichain(parts) : ess_geyer(parts[0]);
  return e.degenerate ? static_cast<double>(m) : e.ess;
}

}  // namespace

double bootstrap_mc_error(const CriterionDraws& draws, int replicates, std::uint64_t seed) {
  if (replicates < 2) return 0.0;
  // exp(v - rowmax) once; a replicate is then a weighted row mean
  std::vector<Matrix> scaled;
  std::vector<Vector> shift;
  for (const auto& b : draws.blocks) {
    Vector mx = b.rowwise().maxCoeff();
    Matrix e(b.rows(), b.cols());
    for (Eigen::Index u = 0; u < b.rows(); ++u)
      if (std::isfinite(mx(u)))
        e.row(u) = (b.row(u).array() - mx(u)).exp().matrix();
      else
        e.row(u).setZero();
    scaled.push_back(std::move(e));
    shift.push_back(std::move(mx));
  }
  std::vector<double> reps;
  reps.reserve(static_cast<std::size_t>(replicates));
  for (int r = 0; r < replicates; ++r) {
    Rng rng = make_stream(seed, 0x626f6f74ULL, static_cast<std::uint64_t>(r));
    double sum = 0.0;
    long count = 0;
    for (std::size_t k = 0; k < scaled.size(); ++k) {
      const Eigen::Index m = scaled[k].cols();
      Vector w = Vector::Zero(m);
      for (Eigen::Index i = 0; i < m; ++i)
        w(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(m)))) += 1.0;
      const Vector mean = scaled[k] * w / static_cast<double>(m);
      for (Eigen::Index u = 0; u < mean.size(); ++u) {
        if (!(mean(u) > 0.0)) continue;
        sum += shift[k](u) + std::log(mean(u));
        ++count;
      }
    }
    if (count > 0) reps.push_back(sum / static_cast<double>(count));
  }
  return sample_sd(reps);
}

CvReport cv_scores(const LogDensityTables& tables, const std::vector<std::string>& species,
                   const CvOptions& options) {
  CvReport rep;
  rep.species = species;
  const auto J = species.size();
  std::array<UnitScores, 4> scores;
  for (int c = 0; c < 4; ++c) {
    const auto& d = tables.cv[static_cast<std::size_t>(c)];
    auto& est = rep.criteria[static_cast<std::size_t>(c)];
    scores[static_cast<std::size_t>(c)] = unit_scores(d);
    const auto& s = scores[static_cast<std::size_t>(c)];
    est.units = static_cast<int>(s.values.size());
    est.excluded = s.excluded;
    est.estimate = mean_of(s.values);
    est.se = s.values.size() > 1 ? sample_sd(s.values) / std::sqrt(static_cast<double>(s.values.size())) : 0.0;
    est.me = bootstrap_mc_error(d, options.bootstrap, options.seed + static_cast<std::uint64_t>(c));
    // ESS of every unit's per-draw log density; the smallest one is reported
    std::vector<std::pair<std::size_t, Eigen::Index>> jobs;
    for (std::size_t k = 0; k < d.blocks.size(); ++k)
      for (Eigen::Index u = 0; u < d.blocks[k].rows(); ++u) jobs.emplace_back(k, u);
    std::vector<double> ess(jobs.size());
    parallel_for(jobs.size(), options.threads, [&](std::size_t i) {
      const auto [k, u] = jobs[i];
      ess[i] = unit_ess(d.blocks[k], u, d.chains[k]);
    });
    est.min_ess = ess.empty() ? 0.0 : *std::min_element(ess.begin(), ess.end());
    est.low_ess = est.min_ess < options.min_ess;
    const std::string name = "CV" + std::to_string(c + 1);
    if (est.excluded > 0)
      rep.warnings.push_back(name + ": " + std::to_string(est.excluded) +
                             " unit(s) with zero Monte Carlo predictive density excluded");
    if (est.low_ess) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "%s: effective sample size %.1f below %.0f", name.c_str(),
                    est.min_ess, options.min_ess);
      rep.warnings.emplace_back(buf);
    }
  }
  rep.cv1_by_species.assign(J, 0.0);
  rep.cv3_by_species.assign(J, 0.0);
  for (int which : {0, 2}) {
    std::vector<double> sum(J, 0.0);
    std::vector<int> cnt(J, 0);
    const auto& d = tables.cv[static_cast<std::size_t>(which)];
    const auto& all = scores[static_cast<std::size_t>(which)].all;
    for (std::size_t u = 0; u < d.units.size(); ++u) {
      const int j = d.units[u][0];
      if (j < 0 || static_cast<std::size_t>(j) >= J || !std::isfinite(all[u])) continue;
      sum[static_cast<std::size_t>(j)] += all[u];
      ++cnt[static_cast<std::size_t>(j)];
    }
    auto& out = which == 0 ? rep.cv1_by_species : rep.cv3_by_species;
    for (std::size_t j = 0; j < J; ++j)
      out[j] = cnt[j] ? sum[j] / cnt[j] : std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

double pit_randomized(int y, const std::function<double(int)>& cdf, int r_min, Rng& rng) {
  if (r_min < 1) throw ValidationError("pit_randomized: r_min must be >= 1");
  const double at = cdf(y);
  const double below = y - r_min < 0 ? 0.0 : cdf(y - r_min);
  if (!(at >= below - 1e-12) || at > 1.0 + 1e-9 || below < -1e-12)
    throw DomainError("pit_randomized: CDF must be nondecreasing with values in [0, 1]");
  const double v = uniform_open(rng);
  return std::clamp(below + v * (at - below), 0.0, 1.0);
}

double predictive_cdf_pointwise(int y, int trials, std::span<const double> alpha,
                                std::span<const double> gamma) {
  if (alpha.size() != gamma.size() || alpha.empty())
    throw ValidationError("predictive_cdf_pointwise: alpha and gamma need equal, nonzero length");
  if (y < 0) return 0.0;
  if (y >= trials) return 1.0;
  double total = 0.0;
  for (std::size_t m = 0; m < alpha.size(); ++m) {
    double s = 0.0;
    for (int z = 0; z <= y; ++z) s += std::exp(betabinom_logpmf(z, trials, alpha[m], gamma[m]));
    total += s;
  }
  return std::min(1.0, total / static_cast<double>(alpha.size()));
}

CdfPair predictive_cdf_sum(int target, int draws, int inner,
                           const std::function<int(int draw, Rng& rng)>& simulate, Rng& rng) {
  if (draws < 1 || inner < 1) throw ValidationError("predictive_cdf_sum: need draws, inner >= 1");
  long at = 0, below = 0;
  for (int m = 0; m < draws; ++m)
    for (int b = 0; b < inner; ++b) {
      const int s = simulate(m, rng);
      at += s <= target;
      below += s <= target - 1;
    }
  const double total = static_cast<double>(draws) * inner;
  return {static_cast<double>(below) / total, static_cast<double>(at) / total};
}

std::vector<PitValue> pit_values(const std::vector<FoldPredictive>& folds, const PitOptions& options) {
  if (options.inner < 1) throw ValidationError("pit: inner simulations must be >= 1");
  std::vector<std::vector<PitValue>> per_fold(folds.size());
  parallel_for(folds.size(), options.threads, [&](std::size_t k) {
    const auto& fp = folds[k];
    const int n = fp.heldout.plots();
    const int species = fp.heldout.species();
    const int m_draws = static_cast<int>(fp.draws.size());
    const auto& groups = fp.obs_groups;
    const auto gof = groups.group_of_species();
    // position of each species inside its observation group
    std::vector<int> pos(static_cast<std::size_t>(species));
    for (const auto& mem : groups.members)
      for (std::size_t a = 0; a < mem.size(); ++a) pos[static_cast<std::size_t>(mem[a])] = static_cast<int>(a);

    // targets
    std::vector<int> t2(static_cast<std::size_t>(n), 0), t3(static_cast<std::size_t>(species), 0);
    int t4 = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < species; ++j) {
        const int y = fp.heldout.counts(i, j);
        t2[static_cast<std::size_t>(i)] += y;
        t3[static_cast<std::size_t>(j)] += y;
        t4 += y;
      }

    // PIT1 needs per-draw alpha and gamma for every (plot, species)
    std::vector<std::vector<double>> alpha1(static_cast<std::size_t>(n * species)),
        gamma1(static_cast<std::size_t>(n * species));
    std::vector<long> at2(t2.size(), 0), below2(t2.size(), 0), at3(t3.size(), 0), below3(t3.size(), 0);
    long at4 = 0, below4 = 0;
    std::vector<int> s2(t2.size()), s3(t3.size());
    for (int m = 0; m < m_draws; ++m) {
      const auto& d = fp.draws[static_cast<std::size_t>(m)];
      std::vector<std::vector<std::vector<double>>> alphas(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        alphas[static_cast<std::size_t>(i)] = plot_alphas(d.f, i, groups);
        for (int j = 0; j < species; ++j) {
          const int g = gof[static_cast<std::size_t>(j)];
          const auto idx = static_cast<std::size_t>(i * species + j);
          alpha1[idx].push_back(alphas[static_cast<std::size_t>(i)][static_cast<std::size_t>(g)][static_cast<std::size_t>(pos[static_cast<std::size_t>(j)])]);
          gamma1[idx].push_back(d.gamma(g));
        }
      }
      Rng rng = make_stream(options.seed, 0x70697400ULL + static_cast<std::uint64_t>(fp.fold),
                            static_cast<std::uint64_t>(m));
      for (int b = 0; b < options.inner; ++b) {
        std::fill(s2.begin(), s2.end(), 0);
        std::fill(s3.begin(), s3.end(), 0);
        int s4 = 0;
        for (int i = 0; i < n; ++i)
          for (int g = 0; g < groups.groups(); ++g) {
            const auto& mem = groups.members[static_cast<std::size_t>(g)];
            const auto y = sample_y(groups.resolution(i, g),
                                    alphas[static_cast<std::size_t>(i)][static_cast<std::size_t>(g)],
                                    d.gamma(g), rng);
            for (std::size_t a = 0; a < mem.size(); ++a) {
              s2[static_cast<std::size_t>(i)] += y[a];
              s3[static_cast<std::size_t>(mem[a])] += y[a];
              s4 += y[a];
            }
          }
        for (std::size_t i = 0; i < s2.size(); ++i) {
          at2[i] += s2[i] <= t2[i];
          below2[i] += s2[i] <= t2[i] - 1;
        }
        for (std::size_t j = 0; j < s3.size(); ++j) {
          at3[j] += s3[j] <= t3[j];
          below3[j] += s3[j] <= t3[j] - 1;
        }
        at4 += s4 <= t4;
        below4 += s4 <= t4 - 1;
      }
    }
    const double total = static_cast<double>(m_draws) * options.inner;
    Rng vrng = make_stream(options.seed, 0x7069745f76ULL, static_cast<std::uint64_t>(fp.fold));
    auto& out = per_fold[k];
    auto sum_pit = [&](int target, long at, long below) {
      return pit_randomized(
          target, [&](int z) { return static_cast<double>(z == target ? at : below) / total; }, 1,
          vrng);
    };
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < species; ++j) {
        const auto idx = static_cast<std::size_t>(i * species + j);
        const int trials = groups.resolution(i, gof[static_cast<std::size_t>(j)]);
        const double u = pit_randomized(
            fp.heldout.counts(i, j),
            [&](int z) { return predictive_cdf_pointwise(z, trials, alpha1[idx], gamma1[idx]); }, 1,
            vrng);
        out.push_back({1, j, fp.plots[static_cast<std::size_t>(i)], fp.fold, u});
      }
    for (int i = 0; i < n; ++i)
      out.push_back({2, -1, fp.plots[static_cast<std::size_t>(i)], fp.fold,
                     sum_pit(t2[static_cast<std::size_t>(i)], at2[static_cast<std::size_t>(i)],
                             below2[static_cast<std::size_t>(i)])});
    for (int j = 0; j < species; ++j)
      out.push_back({3, j, -1, fp.fold,
                     sum_pit(t3[static_cast<std::size_t>(j)], at3[static_cast<std::size_t>(j)],
                             below3[static_cast<std::size_t>(j)])});
    out.push_back({4, -1, -1, fp.fold, sum_pit(t4, at4, below4)});
  });
  std::vector<PitValue> all;
  for (auto& v : per_fold) all.insert(all.end(), v.begin(), v.end());
  return all;
}

std::vector<int> pit_histogram(const std::vector<PitValue>& values, int variant, int bins) {
  if (bins < 1) throw ValidationError("pit_histogram: bins must be >= 1");
  std::vector<int> h(static_cast<std::size_t>(bins), 0);
  for (const auto& p : values) {
    if (p.variant != variant) continue;
    const int b = std::min(bins - 1, static_cast<int>(p.u * bins));
    ++h[static_cast<std::size_t>(std::max(0, b))];
  }
  return h;
}

FoldPredictive fold_predictive(const Model& model, const Dataset& data, std::span<const int> plots,
                               const Matrix& thetas, int chains, std::uint64_t seed, int fold) {
  FoldPredictive fp;
  fp.fold = fold;
  fp.plots.assign(plots.begin(), plots.end());
  fp.heldout = data.subset(plots);
  fp.obs_groups = model.spec().observation == ObservationKind::BetaBinomial
                      ? fp.heldout.groups.singletons()
                      : fp.heldout.groups;
  fp.chains = chains;
  fp.draws.resize(static_cast<std::size_t>(thetas.rows()));
  for (Eigen::Index m = 0; m < thetas.rows(); ++m) {
    Rng rng = make_stream(seed, 0x63760000ULL + static_cast<std::uint64_t>(fold),
                          static_cast<std::uint64_t>(m));
    const Vector theta = thetas.row(m).transpose();
    auto& d = fp.draws[static_cast<std::size_t>(m)];
    d.f = conditional_latent(model, theta, fp.heldout.locations, rng, ConditionalMode::Joint);
    d.gamma = model.latent_state(theta).gamma;
  }
  return fp;
}

namespace {

// Even thinning inside every chain, keeping the chain-major block layout.
Matrix thin_draws(const PosteriorRun& run, int max_draws, int& chains_out) {
  const int chains = static_cast<int>(run.chains.size());
  const int per = run.draws_per_chain();
  int keep = per;
  if (max_draws > 0) keep = std::max(1, std::min(per, max_draws / std::max(1, chains)));
  chains_out = chains;
  Matrix out(static_cast<Eigen::Index>(chains) * keep, run.dimension());
  for (int c = 0; c < chains; ++c)
    for (int i = 0; i < keep; ++i) {
      const int src = static_cast<int>(static_cast<long long>(i) * per / keep);
      out.row(c * keep + i) = run.chains[static_cast<std::size_t>(c)].draws.row(src);
    }
  return out;
}

}  // namespace

std::vector<FoldPredictive> fold_predictives(const ModelSpec& spec, const Dataset& data,
                                             const FoldPlan& plan, const SamplerConfig& sampler,
                                             const CvRunOptions& options) {
  if (static_cast<int>(plan.fold_of_plot.size()) != data.plots())
    throw ValidationError("fold plan does not match the dataset");
  std::vector<FoldPredictive> out(static_cast<std::size_t>(plan.folds));
  // folds in parallel, chains serial inside each fold
  const bool outer = options.threads != 1 && plan.folds > 1;
  parallel_for(out.size(), options.threads, [&](std::size_t k) {
    const int fold = static_cast<int>(k);
    const auto test = plan.plots_in(fold);
    std::vector<int> train;
    for (int i = 0; i < data.plots(); ++i)
      if (plan.fold_of_plot[static_cast<std::size_t>(i)] != fold) train.push_back(i);
    const Model model(spec, data.subset(train));
    SamplerConfig cfg = sampler;
    cfg.seed = mix64(sampler.seed ^ (0x5cf0ULL + k));
    cfg.threads = outer ? 1 : options.threads;
    const auto run_k = run(model, cfg);
    int chains = 1;
    const Matrix thetas = thin_draws(run_k, options.max_draws, chains);
    out[k] = fold_predictive(model, data, test, thetas, chains, options.seed, fold);
  });
  return out;
}

void write_cv_report(const CvReport& report, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::ordered_json j;
  j["model"] = report.model;
  auto num = [](double v) -> nlohmann::ordered_json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  for (int c = 0; c < 4; ++c) {
    const auto& e = report.criteria[static_cast<std::size_t>(c)];
    j["CV" + std::to_string(c + 1)] = {{"estimate", num(e.estimate)}, {"se", num(e.se)},
                                        {"me", num(e.me)},             {"units", e.units},
                                        {"excluded", e.excluded},      {"min_ess", num(e.min_ess)},
                                        {"low_ess", e.low_ess}};
  }
  auto& sp = j["species"];
  sp = nlohmann::ordered_json::array();
  for (std::size_t s = 0; s < report.species.size(); ++s)
    sp.push_back({{"name", report.species[s]},
                  {"CV1", num(report.cv1_by_species[s])},
                  {"CV3", num(report.cv3_by_species[s])}});
  j["warnings"] = report.warnings;
  std::ofstream os(fs::path(dir) / "cv.json");
  if (!os) throw ValidationError("cannot write cv.json");
  os << j.dump(2) << '\n';
  std::ofstream table(fs::path(dir) / "cv_table.txt");
  table << format_cv_table({report});
}

std::string format_cv_table(const std::vector<CvReport>& reports) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-14s %-24s %-24s %-24s %-24s\n", "Model", "CV1 (se/me)",
                "CV2 (se/me)", "CV3 (se/me)", "CV4 (se/me)");
  os << buf;
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%-14s", r.model.c_str());
    os << buf;
    for (const auto& e : r.criteria) {
      if (e.low_ess || !std::isfinite(e.estimate)) {
        std::snprintf(buf, sizeof buf, " %-24s", "--");
      } else {
        char cell[64];
        std::snprintf(cell, sizeof cell, "%.4g (%.1e/%.1e)", e.estimate, e.se, e.me);
        std::snprintf(buf, sizeof buf, " %-24s", cell);
      }
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

void write_pit(const std::vector<PitValue>& values, const std::string& dir, int bins) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream os(fs::path(dir) / "pit.csv");
    if (!os) throw ValidationError("cannot write pit.csv");
    os << "variant,species,plot,fold,u\n";
    char buf[40];
    for (const auto& p : values) {
      std::snprintf(buf, sizeof buf, "%.17g", p.u);
      os << p.variant << ',' << p.species << ',' << p.plot << ',' << p.fold << ',' << buf << '\n';
    }
  }
  std::ofstream os(fs::path(dir) / "pit_hist.csv");
  if (!os) throw ValidationError("cannot write pit_hist.csv");
  os << "variant,bin,lower,upper,count\n";
  for (int v = 1; v <= 4; ++v) {
    const auto h = pit_histogram(values, v, bins);
    for (int b = 0; b < bins; ++b)
      os << v << ',' << b << ',' << static_cast<double>(b) / bins << ','
         << static_cast<double>(b + 1) / bins << ',' << h[static_cast<std::size_t>(b)] << '\n';
  }
}

}  // namespace jsdm
