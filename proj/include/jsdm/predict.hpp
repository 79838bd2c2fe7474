#pragma once

#include "jsdm/kernels.hpp"
#include "jsdm/linalg.hpp"
#include "jsdm/random.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace jsdm {

class Model;

// Study region: rectangle, simple polygon or disc, minus optional polygonal
// holes (excluded areas).
struct Region {
  enum class Kind { Rectangle, Polygon, Disc };
  Kind kind = Kind::Rectangle;
  std::vector<Location> vertices;  // polygon (rectangle stored as 4 corners)
  Location center;                 // disc
  double radius = 0.0;             // disc
  std::vector<std::vector<Location>> holes;

  static Region rectangle(double min_x, double min_y, double max_x, double max_y);
  static Region polygon(std::vector<Location> vertices);
  static Region disc(Location center, double radius);

  bool contains(const Location& p) const;
  // bounding box: min_x, min_y, max_x, max_y
  std::array<double, 4> bounds() const;
  double area() const;  // outer shape minus holes (holes assumed inside, disjoint)
  void validate() const;
};

// Square cells of area A over the bounding box of a region.  Cells whose
// centroid lies outside the region (or inside a hole) are masked out.
struct PredictionMesh {
  double origin_x = 0.0, origin_y = 0.0;  // lower-left corner of cell (0, 0)
  double side = 2.0;
  int nx = 0, ny = 0;
  std::vector<Location> centroids;  // row-major, row 0 at the bottom
  std::vector<char> active;         // 1 = inside the region

  double cell_area() const { return side * side; }
  int cells() const { return nx * ny; }
  std::vector<int> active_cells() const;
  std::vector<Location> active_centroids() const;
};

PredictionMesh build_mesh(const Region& region, double cell_area = 4.0);

enum class ConditionalMode {
  Joint,     // exact joint conditional over all new sites
  Pointwise  // independent per-site conditionals (marginals exact)
};

// One draw of the latent field f (species x new sites) given a posterior
// draw theta, from the Gaussian conditional on the latent values at the data
// locations.  Non-stationary kernels first draw the log length-scale field at
// the new sites.
Matrix conditional_latent(const Model& model, const Vector& theta,
                          std::span<const Location> new_locs, Rng& rng,
                          ConditionalMode mode = ConditionalMode::Joint);

// Conditional mean and variance of the latent field (no sampling of the
// latent values; NS length scales are still drawn).  Rows: species.
struct LatentMoments {
  Matrix mean;
  Matrix variance;
};
LatentMoments conditional_latent_moments(const Model& model, const Vector& theta,
                                         std::span<const Location> new_locs, Rng& rng);

struct PredictOptions {
  int max_draws = 200;    // posterior draws used (evenly thinned)
  int trials = 0;         // > 0: also draw counts at this N
  std::uint64_t seed = 1;
  int threads = 1;
  ConditionalMode mode = ConditionalMode::Joint;
};

// Predictive cover draws on the active cells of a mesh.
struct CoverDraws {
  std::vector<std::string> species;
  std::vector<std::vector<int>> groups;  // observation groups (singletons for BB)
  std::vector<Location> sites;
  double cell_area = 1.0;
  std::vector<int> draw_index;       // row of the posterior draw matrix used
  std::vector<Matrix> cover;         // per draw: species x sites
  std::vector<Matrix> empty;         // per draw: groups x sites
  std::vector<Eigen::MatrixXi> counts;  // per draw, only when trials > 0

  int draws() const { return static_cast<int>(cover.size()); }
};

// `draws` holds one posterior draw per row (e.g. PosteriorRun::pooled()).
CoverDraws predict_cover(const Model& model, const Matrix& draws, std::span<const Location> sites,
                         double cell_area, const PredictOptions& options);
CoverDraws predict_cover(const Model& model, const Matrix& draws, const PredictionMesh& mesh,
                         const PredictOptions& options);

// Area-weighted mean cover over the sites, per draw, for every species, for
// each declared group (sum of its species) and for all species together.
struct TotalCover {
  std::vector<std::string> names;
  Matrix draws;  // posterior draws x names
  Vector mean, lower, upper;  // central interval
  double level = 0.95;
};
TotalCover total_cover(const CoverDraws& draws, const std::vector<std::vector<int>>& declared_groups,
                       const std::vector<std::string>& group_names, double level = 0.95);

// Relative change of the posterior variance of total cover (all species)
// when the cell area is halved.
double refinement_change(const Model& model, const Matrix& draws, const Region& region,
                         double cell_area, const PredictOptions& options);

// Output files: <prefix>_<species>_mean.csv / _sd.csv grids (masked cells
// "NA", top row = north), 16-bit binary PGM of the means, totals.csv with the
// per-draw totals, and summary.json.
void write_prediction(const std::string& dir, const PredictionMesh& mesh, const CoverDraws& draws,
                      const TotalCover& totals);

}  // namespace jsdm
