#include "jsdm/simulate.hpp"

#include "jsdm/errors.hpp"
#include "jsdm/observation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace jsdm {

Dataset simulation_layout(const SimulateConfig& config, std::uint64_t seed) {
  if (config.groups.empty()) throw ValidationError("simulate: no species groups configured");
  Dataset d;
  Rng rng = make_stream(seed, 0x6c61796fULL);
  const int n = config.plots;
  if (config.layout == "grid") {
    const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
    const double step = config.extent / side;
    for (int i = 0; i < n; ++i)
      d.locations.push_back({(i % side + 0.5) * step, (i / side + 0.5) * step});
  } else {
    for (int i = 0; i < n; ++i)
      d.locations.push_back({config.extent * uniform_open(rng), config.extent * uniform_open(rng)});
  }
  for (int i = 0; i < n; ++i) d.plot_ids.push_back("p" + std::to_string(i + 1));
  for (const auto& g : config.groups) {
    std::vector<int> mem;
    for (const auto& s : g.species) {
      mem.push_back(static_cast<int>(d.species_names.size()));
      d.species_names.push_back(s);
    }
    d.group_names.push_back(g.name);
    d.groups.members.push_back(std::move(mem));
  }
  d.groups.resolution.resize(n, static_cast<Eigen::Index>(config.groups.size()));
  for (std::size_t g = 0; g < config.groups.size(); ++g)
    d.groups.resolution.col(static_cast<Eigen::Index>(g)).setConstant(config.groups[g].n);
  d.counts = Eigen::MatrixXi::Zero(n, d.species());
  d.validate();
  return d;
}

SimulatedData simulate_dataset(const ModelSpec& spec, const Dataset& layout,
                               const std::optional<Vector>& theta, std::uint64_t seed) {
  const Model model(spec, layout);
  Rng rng = make_stream(seed, 0x73696dULL);
  SimulatedData out;
  out.truth.model = spec.name();
  out.truth.seed = seed;
  out.truth.names = model.parameter_names();
  if (theta && theta->size() != model.dimension())
    throw ValidationError("simulate: theta has " + std::to_string(theta->size()) +
                          " entries, the model needs " + std::to_string(model.dimension()));

  const auto& obs = model.observation_groups();
  const auto& declared = layout.groups;
  std::vector<double> fv;
  // Independent Beta-Binomial draws may overflow a group's N; such plots are
  // redrawn, and a truth where that keeps happening is discarded.
  auto draw_counts = [&](const LatentState& st) {
    for (int i = 0; i < layout.plots(); ++i) {
      for (int dg = 0; dg < declared.groups(); ++dg) {
        const int trials = declared.resolution(i, dg);
        const auto& members = declared.members[static_cast<std::size_t>(dg)];
        bool ok = false;
        for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
          int total = 0;
          for (int g = 0; g < obs.groups(); ++g) {
            const auto& mem = obs.members[static_cast<std::size_t>(g)];
            // observation groups nest inside declared groups
            if (std::find(members.begin(), members.end(), mem[0]) == members.end()) continue;
            fv.resize(mem.size());
            for (std::size_t a = 0; a < mem.size(); ++a) fv[a] = st.f(mem[a], i);
            const auto alpha = softmax_alpha(fv);
            const auto y = sample_y(trials, alpha, st.gamma(g), rng);
            for (std::size_t a = 0; a < mem.size(); ++a) {
              out.data.counts(i, mem[a]) = y[a];
              total += y[a];
            }
          }
          ok = total <= trials;
        }
        if (!ok) return false;
      }
    }
    return true;
  };

  out.data = layout;
  for (int draw = 0;; ++draw) {
    if (draw == 100)
      throw NumericalError("simulate: 100 prior draws all give Beta-Binomial counts above N");
    out.truth.theta = theta ? *theta : model.sample_prior(rng);
    const auto st = model.latent_state(out.truth.theta);
    out.truth.f = st.f;
    out.truth.gamma = st.gamma;
    if (draw_counts(st)) break;
    if (theta)
      throw ValidationError("simulate: the given theta makes Beta-Binomial counts exceed N");
    ++out.truth.rejected_draws;
  }
  out.data.validate();
  return out;
}

void write_truth(const GroundTruth& truth, const Dataset& data, const std::string& path) {
  nlohmann::ordered_json j;
  j["model"] = truth.model;
  j["seed"] = truth.seed;
  j["rejected_prior_draws"] = truth.rejected_draws;
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  for (std::size_t k = 0; k < truth.names.size(); ++k)
    params[truth.names[k]] = truth.theta(static_cast<Eigen::Index>(k));
  j["theta"] = params;
  nlohmann::ordered_json gamma = nlohmann::ordered_json::array();
  for (Eigen::Index g = 0; g < truth.gamma.size(); ++g) gamma.push_back(truth.gamma(g));
  j["gamma"] = gamma;
  nlohmann::ordered_json f = nlohmann::ordered_json::object();
  for (int s = 0; s < data.species(); ++s) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int i = 0; i < data.plots(); ++i) row.push_back(truth.f(s, i));
    f[data.species_names[static_cast<std::size_t>(s)]] = row;
  }
  j["latent"] = f;
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write " + path);
  os << j.dump(2) << '\n';
}

}  // namespace jsdm
