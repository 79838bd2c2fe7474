#pragma once

#include "jsdm/config.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace jsdm {

// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,     // unexpected error
  kExitValidation = 2,  // bad input, config or arguments
  kExitNumerical = 3,   // factorization or sampler failure
};

struct CommandOptions {
  std::string config;  // path to the JSON config
  std::optional<std::uint64_t> seed;
  std::string out;  // run directory; default: config output.dir
  int threads = 1;
  std::string model;  // overrides model.name
};

// Run directory layout under --out:
//   config.json          effective configuration
//   data/                simulate: CSV tables + truth.json
//   fit/                 draw store, summary.csv, diagnostics.json
//   predict/             rasters, totals.csv, summary.json
//   cv/                  cv.json, cv_table.txt, folds.csv, predictive.bin
//   pit/                 pit.csv, pit_hist.csv
//   report.md
int cmd_fit(const CommandOptions& options, std::ostream& log);
int cmd_predict(const CommandOptions& options, std::ostream& log);
int cmd_cv(const CommandOptions& options, std::ostream& log);
int cmd_pit(const CommandOptions& options, std::ostream& log);
int cmd_simulate(const CommandOptions& options, std::ostream& log);
int cmd_report(const CommandOptions& options, std::ostream& log);

// Dispatch by name; maps exceptions to exit codes and prints the message.
int run_command(const std::string& name, const CommandOptions& options, std::ostream& log,
                std::ostream& err);

// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace jsdm
