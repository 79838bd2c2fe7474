#pragma once

#include "jsdm/dataset.hpp"

#include <string>
#include <vector>

namespace jsdm {

// CSV tables (UTF-8, header row, comma separated, '.' decimal):
//   plots      plot,x,y
//   species    species,group
//   groups     group,N
//   counts     plot,species,count      (long format; missing pairs are 0)
//          or  plot,species,percent    (converted with the group's N)
//   resolution plot,group,N            (optional per-plot overrides)
struct DatasetPaths {
  std::string plots, species, groups, counts, resolution;
};

struct LoadReport {
  std::vector<std::string> warnings;
  int converted = 0;  // percent entries converted to counts
};

// Percent-to-count conversion residual above which a warning is emitted.
inline constexpr double kPercentTolerance = 0.25;

// Throws ValidationError naming the file and row for malformed input and
// for integrity violations.
Dataset load_dataset(const DatasetPaths& paths, LoadReport* report = nullptr);

// Writes the five tables into `dir` (resolution only lists entries that
// differ from the group default).
void write_dataset(const Dataset& data, const std::string& dir, const std::vector<int>& group_n);

// Round half to even.
long round_half_even(double x);

// Per-group default N: the most common value in the resolution table.
std::vector<int> default_resolution(const Dataset& data);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line;  // source line of every row

  int column(const std::string& name, const std::string& file) const;
};
CsvTable read_csv(const std::string& path);

}  // namespace jsdm
