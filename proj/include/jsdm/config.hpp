#pragma once

#include "jsdm/io.hpp"
#include "jsdm/model.hpp"
#include "jsdm/predict.hpp"
#include "jsdm/sampler.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace jsdm {

struct CvConfig {
  int folds = 10;
  std::optional<std::uint64_t> seed;  // fold plan seed; defaults to the run seed
  int max_draws = 400;
  int bootstrap = 1000;
  double min_ess = 50.0;
  int pit_inner = 100;
  int pit_bins = 20;
};

struct MeshConfig {
  std::optional<Region> region;  // default: bounding box of the plots
  double cell_area = 4.0;
  int max_draws = 200;
  int trials = 0;
  ConditionalMode mode = ConditionalMode::Joint;
  double level = 0.95;
};

struct SimulateGroup {
  std::string name;
  int n = 100;
  std::vector<std::string> species;
};

struct SimulateConfig {
  int plots = 30;
  double extent = 100.0;
  std::string layout = "uniform";  // or "grid"
  std::vector<SimulateGroup> groups;
  std::optional<std::vector<double>> theta;  // unconstrained truth; default: prior draw
};

struct RunConfig {
  std::uint64_t seed = 1;
  DatasetPaths data;  // as written; relative paths resolve against base_dir
  ModelSpec model;
  SamplerConfig sampler;
  CvConfig cv;
  MeshConfig mesh;
  SimulateConfig simulate;
  std::string output_dir = "run";

  std::string base_dir;  // not serialized

  DatasetPaths resolved_data() const;
  void validate() const;
};

// Unknown keys and wrong types throw ValidationError naming the key.
RunConfig parse_config(const nlohmann::json& j, const std::string& base_dir = ".");
RunConfig load_config(const std::string& path);
nlohmann::ordered_json to_json(const RunConfig& config);
std::string config_schema();  // JSON schema of the config format

nlohmann::ordered_json to_json(const ModelSpec& spec);
nlohmann::ordered_json to_json(const Region& region);

}  // namespace jsdm
