#pragma once

#include "jsdm/config.hpp"
#include "jsdm/dataset.hpp"
#include "jsdm/model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace jsdm {

struct GroundTruth {
  std::string model;
  std::uint64_t seed = 0;
  std::vector<std::string> names;
  Vector theta;  // unconstrained
  Matrix f;      // species x plots
  Vector gamma;  // per observation group
  int rejected_draws = 0;  // prior draws discarded for infeasible counts
};

struct SimulatedData {
  Dataset data;
  GroundTruth truth;
};

// Dataset skeleton: locations (uniform in [0, extent]^2 or a near-square
// grid), species and groups, zero counts.
Dataset simulation_layout(const SimulateConfig& config, std::uint64_t seed);

// Draw theta from the prior (or use the given one), then latents, covers and
// counts.  Beta-Binomial truths draw species independently; plots whose
// draws overflow a group's N are redrawn, and prior draws under which that
// keeps failing are replaced.
SimulatedData simulate_dataset(const ModelSpec& spec, const Dataset& layout,
                               const std::optional<Vector>& theta, std::uint64_t seed);

void write_truth(const GroundTruth& truth, const Dataset& data, const std::string& path);

}  // namespace jsdm
