#pragma once

#include "jsdm/kernels.hpp"
#include "jsdm/observation.hpp"

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

namespace jsdm {

// Plot locations, per-plot per-species counts and the group structure.
struct Dataset {
  std::vector<std::string> plot_ids;
  std::vector<Location> locations;
  std::vector<std::string> species_names;
  std::vector<std::string> group_names;
  GroupStructure groups;   // members + per-plot resolution N (plots x groups)
  Eigen::MatrixXi counts;  // plots x species

  int plots() const { return static_cast<int>(locations.size()); }
  int species() const { return static_cast<int>(species_names.size()); }

  // Referential integrity, 0 <= y and sum_{j in group} y_ij <= N_ig.
  // Throws ValidationError naming the offending plot and group.
  void validate() const;

  // Restriction to the given plots (in the given order).
  Dataset subset(std::span<const int> plots) const;
};

}  // namespace jsdm
