#include "jsdm/commands.hpp"
#include "jsdm/errors.hpp"
#include "jsdm/synth_bench.hpp"

#include <CLI11.hpp>

#include <iostream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

using namespace jsdm;

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // keep kernel-sized matrices on the heap instead of fresh mmap pages per evaluation
  mallopt(M_MMAP_THRESHOLD, 512 << 20);
#endif
  CLI::App app{"Synthetic scenarios and benchmarks"};
  app.require_subcommand(1, 1);

  ScenarioOptions so;
  so.sampler.chains = 2;
  so.sampler.iterations = 1500;
  so.sampler.warmup = 500;
  std::string out = "bench";
  MisfitOptions mo;
  std::vector<int> sizes{400, 800, 1600, 3200};
  int repeats = 5;
  int bench_plots = 200, bench_species = 14;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", so.seed, "master seed");
    sub->add_option("--threads", so.threads, "worker threads")->check(CLI::NonNegativeNumber);
    sub->add_option("--out", out, "report directory");
  };
  auto scenario = [&](CLI::App* sub, int replicates, int plots) {
    so.replicates = replicates;
    so.plots = plots;
    common(sub);
    sub->add_option("--replicates", so.replicates, "number of replicates")->capture_default_str();
    sub->add_option("--plots", so.plots, "plots per replicate")->capture_default_str();
    sub->add_option("--species", so.species, "species in the exclusive group")->capture_default_str();
    sub->add_option("--chains", so.sampler.chains)->capture_default_str();
    sub->add_option("--iterations", so.sampler.iterations, "per chain, including warmup")->capture_default_str();
    sub->add_option("--warmup", so.sampler.warmup)->capture_default_str();
  };

  auto* rec = app.add_subcommand("recovery", "interval coverage of C-DM parameters");
  scenario(rec, 100, 100);
  auto* cor = app.add_subcommand("correlation", "LMC1-S-DM correlation recovery");
  scenario(cor, 1, 150);
  auto* mis = app.add_subcommand("misfit", "DM versus BB fits on DM data, scored by CV");
  scenario(mis, 100, 40);
  mis->add_option("--dm", mo.dm_model)->capture_default_str();
  mis->add_option("--bb", mo.bb_model)->capture_default_str();
  mis->add_option("--folds", mo.folds)->capture_default_str();
  mis->add_option("--max-draws", mo.max_draws)->capture_default_str();
  auto* bench = app.add_subcommand("bench", "timing of the likelihood hot path");
  common(bench);
  bench->add_option("--sizes", sizes, "plot counts for the NS scaling")->capture_default_str();
  bench->add_option("--repeats", repeats)->capture_default_str();
  bench->add_option("--plots", bench_plots)->capture_default_str();
  bench->add_option("--species", bench_species)->capture_default_str();
  auto* pipe = app.add_subcommand("pipeline", "fit, predict, cv and pit for every configuration");
  int pipe_plots = 30;
  common(pipe);
  pipe->add_option("--plots", pipe_plots)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*rec) {
      const auto r = scenario_recovery(so);
      write_recovery(r, out);
      for (std::size_t p = 0; p < r.names.size(); ++p)
        std::cout << r.names[p] << ": " << r.covered[p] << "/" << r.replicates << " covered\n";
    } else if (*cor) {
      const auto r = scenario_correlation(so);
      write_correlation(r, out);
      for (std::size_t k = 0; k < r.max_error.size(); ++k)
        std::cout << "replicate " << k << ": max |error| " << r.max_error[k] << ", R-hat " << r.max_rhat[k] << '\n';
    } else if (*mis) {
      mo.scenario = so;
      const auto r = scenario_misfit(mo);
      write_misfit(r, out);
      for (int c = 0; c < 4; ++c)
        std::cout << "CV" << c + 1 << ": DM better in " << r.dm_wins(c) << "/" << r.replicates.size() << '\n';
      std::cout << "CV1 within one se: " << r.cv1_within_se() << "/" << r.replicates.size() << '\n';
    } else if (*bench) {
      std::vector<Timing> t;
      for (const char* m : {"LMC1-S-DM", "IGP-S-DM", "LMC1-NS-DM"})
        t.push_back(bench_log_posterior(m, bench_plots, bench_species, repeats, so.seed));
      const auto scaling = bench_nonstationary_scaling(sizes, repeats, so.seed);
      const auto cov = bench_cov_matrix(bench_plots, repeats, so.seed);
      write_bench(t, scaling, cov, out);
      for (const auto& x : t) std::cout << x.label << " (n=" << x.n << "): " << 1e3 * x.seconds << " ms\n";
      for (const auto& x : scaling.timings) std::cout << x.label << " (n=" << x.n << "): " << 1e3 * x.seconds << " ms\n";
      std::cout << "NS log-log slope: " << scaling.slope << " (Cholesky alone: " << scaling.reference_slope << ")\n";
      std::cout << "assemble_cov " << 1e3 * cov.library_seconds << " ms, naive " << 1e3 * cov.naive_seconds
                << " ms, with factor " << 1e3 * cov.factored_seconds << " ms, max difference " << cov.max_difference
                << '\n';
    } else if (*pipe) {
      const auto r = pipeline_all_models(pipe_plots, so.seed, so.threads);
      write_pipeline(r, out);
      int failed = 0;
      for (const auto& c : r) {
        std::cout << c.model << ": " << (c.ok ? "ok" : "FAILED " + c.error) << " (" << c.seconds << " s)\n";
        failed += c.ok ? 0 : 1;
      }
      return failed == 0 ? kExitOk : kExitNumerical;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}
