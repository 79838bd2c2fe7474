#include "jsdm/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // keep kernel-sized matrices on the heap instead of fresh mmap pages per evaluation
  mallopt(M_MMAP_THRESHOLD, 512 << 20);
#endif
  CLI::App app{"Joint species distribution models for point-intercept cover data"};
  app.require_subcommand(1, 1);

  jsdm::CommandOptions opt;
  std::uint64_t seed = 0;
  struct Entry {
    const char* name;
    const char* help;
  };
  const Entry entries[] = {
      {"fit", "sample the posterior of one model"},
      {"predict", "map cover on a grid over the study region"},
      {"cv", "K-fold cross-validation criteria CV1-CV4"},
      {"pit", "PIT values and histograms for the held-out plots"},
      {"simulate", "draw a synthetic dataset from the prior or given parameters"},
      {"report", "collect a run directory into report.md"},
  };
  for (const auto& e : entries) {
    auto* sub = app.add_subcommand(e.name, e.help);
    sub->add_option("--config", opt.config, "JSON configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--out", opt.out, "run directory (default: output.dir of the config)");
    sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::NonNegativeNumber);
    if (std::string(e.name) != "simulate" && std::string(e.name) != "report")
      sub->add_option("--model", opt.model, "model name such as LMC1-S-DM (overrides the config)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : jsdm::kExitValidation;
  }
  for (auto* sub : app.get_subcommands()) {
    if (sub->count("--seed") > 0) opt.seed = seed;
    return jsdm::run_command(sub->get_name(), opt, std::cout, std::cerr);
  }
  return jsdm::kExitValidation;
}
