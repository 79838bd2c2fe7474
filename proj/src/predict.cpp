#include "jsdm/predict.hpp"

#include "jsdm/errors.hpp"
#include "jsdm/model.hpp"
#include "jsdm/observation.hpp"
#include "jsdm/parallel.hpp"

#include <json.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace jsdm {

namespace {

double shoelace(const std::vector<Location>& v) {
  double a = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& p = v[i];
    const auto& q = v[(i + 1) % v.size()];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * std::abs(a);
}

// even-odd rule; points on an edge may land on either side
bool in_polygon(const std::vector<Location>& v, const Location& p) {
  bool inside = false;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    if ((v[i].y > p.y) != (v[j].y > p.y)) {
      const double x = v[j].x + (p.y - v[j].y) * (v[i].x - v[j].x) / (v[i].y - v[j].y);
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

// Lower factor of a PSD matrix.  Tiny negative eigenvalues (round-off in
// K** - V'V) are clipped when the jittered Cholesky still fails.
Matrix psd_factor(const Matrix& a, double rel_jitter) {
  JitteredCholesky ch;
  if (try_cholesky_with_jitter(a, rel_jitter, 6, ch)) return ch.lower;
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  if (es.info() != Eigen::Success) throw NumericalError("conditional covariance: eigensolver failed");
  Vector ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -1e-6 * scale)
    throw NumericalError("conditional covariance is not positive semi-definite");
  ev = ev.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal();
}

struct KernelPrediction {
  Matrix weights;  // V = chol^{-1} K_*, data x new: mean of u_c(new) = V' z_c
  Matrix cov;      // K_** - V'V (joint mode only)
  Vector var;      // its diagonal
};

Vector standard_normals(Eigen::Index n, Rng& rng) {
  Vector xi(n);
  for (Eigen::Index i = 0; i < n; ++i) xi(i) = standard_normal(rng);
  return xi;
}

// Without `joint` only the diagonal of the new-site block is formed and the
// NS length scales are drawn from their marginal conditionals.
KernelPrediction condition_kernel(const KernelState& ks, bool nonstationary,
                                  const Matrix& dist_cross, const Matrix& dist_new, bool joint,
                                  double rel_jitter, Rng& rng) {
  const Eigen::Index n = dist_cross.rows();
  const Eigen::Index m = dist_cross.cols();
  Matrix k_cross(n, m);
  Matrix k_new;
  KernelPrediction out;
  if (nonstationary) {
    // log l at the new sites given the field at the data sites
    const double s2 = ks.field_variance;
    const double lf = ks.field_length_scale;
    const Matrix kf_cross = (s2 * (-dist_cross.array() / lf).exp()).matrix();
    const Matrix vf = ks.field_chol.triangularView<Eigen::Lower>().solve(kf_cross);
    const Vector mean = (vf.transpose() * ks.field_z).array() + ks.field_mean;
    const Vector xi = standard_normals(m, rng);
    Vector log_l;
    if (joint) {
      const Matrix kf_new = (s2 * (-dist_new.array() / lf).exp()).matrix();
      log_l = mean + psd_factor(kf_new - vf.transpose() * vf, rel_jitter) * xi;
    } else {
      const Vector v = (s2 - vf.colwise().squaredNorm().array()).cwiseMax(0.0);
      log_l = mean + v.cwiseSqrt().cwiseProduct(xi);
    }
    const Vector l_new = log_l.array().exp();
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = 0; i < n; ++i)
        k_cross(i, j) = matern32_nonstat_from_distance(dist_cross(i, j), ks.length_scales(i), l_new(j));
    if (joint) {
      k_new.resize(m, m);
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i <= j; ++i)
          k_new(i, j) = k_new(j, i) =
              matern32_nonstat_from_distance(dist_new(i, j), l_new(i), l_new(j));
    }
  } else {
    k_cross = (-dist_cross.array() / ks.length_scale).exp().matrix();
    if (joint) k_new = (-dist_new.array() / ks.length_scale).exp().matrix();
  }
  out.weights = ks.chol.triangularView<Eigen::Lower>().solve(k_cross);
  if (joint) {
    out.cov = k_new - out.weights.transpose() * out.weights;
    out.var = out.cov.diagonal();
  } else {
    // unit marginal variance for both kernels
    out.var = (1.0 - out.weights.colwise().squaredNorm().array()).matrix().transpose();
  }
  out.var = out.var.cwiseMax(0.0);
  return out;
}

struct Conditioned {
  LatentState state;
  std::vector<KernelPrediction> kernels;
};

Conditioned condition(const Model& model, const Vector& theta, std::span<const Location> new_locs,
                      bool joint, Rng& rng) {
  Conditioned out{model.latent_state(theta), {}};
  if (!model.spec().spatial()) return out;
  const auto& data_locs = model.data().locations;
  const Matrix dist_cross = distance_matrix(data_locs, new_locs);
  const Matrix dist_new = joint ? distance_matrix(new_locs) : Matrix();
  const bool ns = model.spec().kernel == KernelKind::NonStationary;
  for (const auto& ks : out.state.kernels)
    out.kernels.push_back(
        condition_kernel(ks, ns, dist_cross, dist_new, joint, model.spec().rel_jitter, rng));
  return out;
}

}  // namespace

Region Region::rectangle(double min_x, double min_y, double max_x, double max_y) {
  Region r;
  r.kind = Kind::Rectangle;
  r.vertices = {{min_x, min_y}, {max_x, min_y}, {max_x, max_y}, {min_x, max_y}};
  return r;
}

Region Region::polygon(std::vector<Location> vertices) {
  Region r;
  r.kind = Kind::Polygon;
  r.vertices = std::move(vertices);
  return r;
}

Region Region::disc(Location center, double radius) {
  Region r;
  r.kind = Kind::Disc;
  r.center = center;
  r.radius = radius;
  return r;
}

void Region::validate() const {
  if (kind == Kind::Disc) {
    if (!(radius > 0.0) || !std::isfinite(center.x) || !std::isfinite(center.y))
      throw ValidationError("region: disc needs a finite center and positive radius");
  } else {
    if (vertices.size() < 3) throw ValidationError("region: polygon needs at least 3 vertices");
    check_finite(vertices);
  }
  for (const auto& h : holes)
    if (h.size() < 3) throw ValidationError("region: hole polygon needs at least 3 vertices");
  if (!(area() > 0.0)) throw ValidationError("region: area must be positive");
}

bool Region::contains(const Location& p) const {
  const bool outer = kind == Kind::Disc ? distance(p, center) <= radius : in_polygon(vertices, p);
  if (!outer) return false;
  for (const auto& h : holes)
    if (in_polygon(h, p)) return false;
  return true;
}

std::array<double, 4> Region::bounds() const {
  if (kind == Kind::Disc)
    return {center.x - radius, center.y - radius, center.x + radius, center.y + radius};
  std::array<double, 4> b{vertices[0].x, vertices[0].y, vertices[0].x, vertices[0].y};
  for (const auto& v : vertices) {
    b[0] = std::min(b[0], v.x);
    b[1] = std::min(b[1], v.y);
    b[2] = std::max(b[2], v.x);
    b[3] = std::max(b[3], v.y);
  }
  return b;
}

double Region::area() const {
  double a = kind == Kind::Disc ? std::numbers::pi * radius * radius : shoelace(vertices);
  for (const auto& h : holes) a -= shoelace(h);
  return a;
}

std::vector<int> PredictionMesh::active_cells() const {
  std::vector<int> out;
  for (int c = 0; c < cells(); ++c)
    if (active[static_cast<std::size_t>(c)]) out.push_back(c);
  return out;
}

std::vector<Location> PredictionMesh::active_centroids() const {
  std::vector<Location> out;
  for (int c : active_cells()) out.push_back(centroids[static_cast<std::size_t>(c)]);
  return out;
}

PredictionMesh build_mesh(const Region& region, double cell_area) {
  if (!(cell_area > 0.0) || !std::isfinite(cell_area))
    throw ValidationError("mesh: cell area must be positive");
  region.validate();
  const auto b = region.bounds();
  PredictionMesh mesh;
  mesh.side = std::sqrt(cell_area);
  mesh.origin_x = b[0];
  mesh.origin_y = b[1];
  // tolerate round-off so a 10 m side with 2 m cells gives exactly 5
  mesh.nx = std::max(1, static_cast<int>(std::ceil((b[2] - b[0]) / mesh.side - 1e-9)));
  mesh.ny = std::max(1, static_cast<int>(std::ceil((b[3] - b[1]) / mesh.side - 1e-9)));
  const auto total = static_cast<std::size_t>(mesh.nx) * static_cast<std::size_t>(mesh.ny);
  if (total > 50'000'000) throw ValidationError("mesh: too many cells; increase the cell area");
  mesh.centroids.reserve(total);
  mesh.active.reserve(total);
  for (int r = 0; r < mesh.ny; ++r)
    for (int c = 0; c < mesh.nx; ++c) {
      const Location p{mesh.origin_x + (c + 0.5) * mesh.side, mesh.origin_y + (r + 0.5) * mesh.side};
      mesh.centroids.push_back(p);
      mesh.active.push_back(region.contains(p) ? 1 : 0);
    }
  if (mesh.active_cells().empty()) throw ValidationError("mesh: no cell centroid inside the region");
  return mesh;
}

Matrix conditional_latent(const Model& model, const Vector& theta,
                          std::span<const Location> new_locs, Rng& rng, ConditionalMode mode) {
  const bool joint = mode == ConditionalMode::Joint;
  auto cond = condition(model, theta, new_locs, joint, rng);
  const auto& st = cond.state;
  const int species = static_cast<int>(st.beta.size());
  const auto m = static_cast<Eigen::Index>(new_locs.size());
  Matrix f = st.beta.replicate(1, m);
  if (!model.spec().spatial()) return f;

  std::vector<Matrix> factors;
  if (joint)
    for (const auto& kp : cond.kernels) factors.push_back(psd_factor(kp.cov, model.spec().rel_jitter));
  const auto comps = static_cast<Eigen::Index>(st.z.rows());
  Matrix u(comps, m);
  for (Eigen::Index c = 0; c < comps; ++c) {
    const auto k = static_cast<std::size_t>(st.kernel_of_component[static_cast<std::size_t>(c)]);
    const auto& kp = cond.kernels[k];
    const Vector xi = standard_normals(m, rng);
    Vector draw = kp.weights.transpose() * st.z.row(c).transpose();
    if (joint)
      draw += factors[k] * xi;
    else
      draw += kp.var.cwiseSqrt().cwiseProduct(xi);
    u.row(c) = draw.transpose();
  }
  f.topRows(species) += st.mixing * u;
  return f;
}

LatentMoments conditional_latent_moments(const Model& model, const Vector& theta,
                                         std::span<const Location> new_locs, Rng& rng) {
  auto cond = condition(model, theta, new_locs, false, rng);
  const auto& st = cond.state;
  const auto m = static_cast<Eigen::Index>(new_locs.size());
  LatentMoments out;
  out.mean = st.beta.replicate(1, m);
  out.variance = Matrix::Zero(st.beta.size(), m);
  if (!model.spec().spatial()) return out;
  const auto comps = static_cast<Eigen::Index>(st.z.rows());
  Matrix mean_u(comps, m), var_u(comps, m);
  for (Eigen::Index c = 0; c < comps; ++c) {
    const auto& kp = cond.kernels[static_cast<std::size_t>(st.kernel_of_component[static_cast<std::size_t>(c)])];
    mean_u.row(c) = (kp.weights.transpose() * st.z.row(c).transpose()).transpose();
    var_u.row(c) = kp.var.transpose();
  }
  out.mean += st.mixing * mean_u;
  // components are conditionally independent
  out.variance = st.mixing.array().square().matrix() * var_u;
  return out;
}

namespace {

std::vector<int> thin(int rows, int max_draws) {
  const int keep = max_draws > 0 ? std::min(rows, max_draws) : rows;
  std::vector<int> out;
  for (int i = 0; i < keep; ++i)
    out.push_back(static_cast<int>(static_cast<long long>(i) * rows / keep));
  return out;
}

}  // namespace

CoverDraws predict_cover(const Model& model, const Matrix& draws, std::span<const Location> sites,
                         double cell_area, const PredictOptions& options) {
  if (draws.cols() != model.dimension())
    throw ValidationError("predict: draw matrix does not match the model dimension");
  if (draws.rows() == 0) throw ValidationError("predict: no posterior draws");
  if (sites.empty()) throw ValidationError("predict: no prediction sites");
  if (options.trials < 0) throw ValidationError("predict: trials must be >= 0");
  check_finite(sites);

  CoverDraws out;
  out.species = model.data().species_names;
  out.groups = model.observation_groups().members;
  out.sites.assign(sites.begin(), sites.end());
  out.cell_area = cell_area;
  out.draw_index = thin(static_cast<int>(draws.rows()), options.max_draws);
  const std::size_t count = out.draw_index.size();
  out.cover.resize(count);
  out.empty.resize(count);
  if (options.trials > 0) out.counts.resize(count);

  const int species = static_cast<int>(out.species.size());
  const auto m = static_cast<Eigen::Index>(sites.size());
  parallel_for(count, options.threads, [&](std::size_t d) {
    Rng rng = make_stream(options.seed, 0x70726564ULL, d);
    const Vector theta = draws.row(out.draw_index[d]).transpose();
    const Matrix f = conditional_latent(model, theta, sites, rng, options.mode);
    const Vector gamma = model.latent_state(theta).gamma;
    Matrix cover(species, m);
    Matrix empty(static_cast<Eigen::Index>(out.groups.size()), m);
    Eigen::MatrixXi counts;
    if (options.trials > 0) counts.resize(species, m);
    std::vector<double> fv, conc;
    for (Eigen::Index i = 0; i < m; ++i) {
      for (std::size_t g = 0; g < out.groups.size(); ++g) {
        const auto& mem = out.groups[g];
        fv.resize(mem.size());
        for (std::size_t a = 0; a < mem.size(); ++a) fv[a] = f(mem[a], i);
        conc = softmax_alpha(fv);
        for (double& c : conc) c *= gamma(static_cast<Eigen::Index>(g));
        const auto phi = dirichlet_draw(rng, conc);
        for (std::size_t a = 0; a < mem.size(); ++a) cover(mem[a], i) = phi[a];
        empty(static_cast<Eigen::Index>(g), i) = phi.back();
        if (options.trials > 0) {
          const auto y = multinomial_draw(rng, options.trials, phi);
          for (std::size_t a = 0; a < mem.size(); ++a) counts(mem[a], i) = y[a];
        }
      }
    }
    out.cover[d] = std::move(cover);
    out.empty[d] = std::move(empty);
    if (options.trials > 0) out.counts[d] = std::move(counts);
  });
  return out;
}

CoverDraws predict_cover(const Model& model, const Matrix& draws, const PredictionMesh& mesh,
                         const PredictOptions& options) {
  const auto sites = mesh.active_centroids();
  return predict_cover(model, draws, sites, mesh.cell_area(), options);
}

TotalCover total_cover(const CoverDraws& draws, const std::vector<std::vector<int>>& declared_groups,
                       const std::vector<std::string>& group_names, double level) {
  if (draws.draws() == 0) throw ValidationError("total_cover: no draws");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("total_cover: level must be in (0, 1)");
  if (declared_groups.size() != group_names.size())
    throw ValidationError("total_cover: group names do not match the groups");
  const int species = static_cast<int>(draws.species.size());
  TotalCover out;
  out.level = level;
  out.names = draws.species;
  for (const auto& g : group_names) out.names.push_back("group:" + g);
  out.names.push_back("all");
  const auto q = static_cast<Eigen::Index>(out.names.size());
  out.draws.resize(draws.draws(), q);
  for (int d = 0; d < draws.draws(); ++d) {
    // equal cell areas: area weighting reduces to the plain mean
    const Vector per_species = draws.cover[static_cast<std::size_t>(d)].rowwise().mean();
    out.draws.row(d).head(species) = per_species.transpose();
    for (std::size_t g = 0; g < declared_groups.size(); ++g) {
      double s = 0.0;
      for (int j : declared_groups[g]) s += per_species(j);
      out.draws(d, species + static_cast<Eigen::Index>(g)) = s;
    }
    out.draws(d, q - 1) = per_species.sum();
  }
  out.mean = out.draws.colwise().mean().transpose();
  out.lower.resize(q);
  out.upper.resize(q);
  const double tail = 0.5 * (1.0 - level);
  std::vector<double> col(static_cast<std::size_t>(out.draws.rows()));
  auto quantile = [&](double p) {
    // type-7 interpolation on sorted values
    const double h = p * static_cast<double>(col.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, col.size() - 1);
    return col[lo] + (h - static_cast<double>(lo)) * (col[hi] - col[lo]);
  };
  for (Eigen::Index c = 0; c < q; ++c) {
    for (Eigen::Index r = 0; r < out.draws.rows(); ++r) col[static_cast<std::size_t>(r)] = out.draws(r, c);
    std::sort(col.begin(), col.end());
    out.lower(c) = quantile(tail);
    out.upper(c) = quantile(1.0 - tail);
  }
  return out;
}

double refinement_change(const Model& model, const Matrix& draws, const Region& region,
                         double cell_area, const PredictOptions& options) {
  auto variance = [&](double area) {
    const auto mesh = build_mesh(region, area);
    const auto cover = predict_cover(model, draws, mesh, options);
    const auto tot = total_cover(cover, {}, {});
    const Eigen::Index last = tot.draws.cols() - 1;
    const Vector col = tot.draws.col(last);
    const double mean = col.mean();
    return (col.array() - mean).square().sum() / static_cast<double>(col.size() - 1);
  };
  const double coarse = variance(cell_area);
  const double fine = variance(0.5 * cell_area);
  return std::abs(fine - coarse) / coarse;
}

namespace {

void write_grid(const std::filesystem::path& path, const PredictionMesh& mesh,
                const std::vector<double>& values) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write " + path.string());
  char buf[32];
  for (int r = mesh.ny - 1; r >= 0; --r) {
    for (int c = 0; c < mesh.nx; ++c) {
      const auto idx = static_cast<std::size_t>(r * mesh.nx + c);
      if (c) os << ',';
      if (mesh.active[idx]) {
        std::snprintf(buf, sizeof buf, "%.10g", values[idx]);
        os << buf;
      } else {
        os << "NA";
      }
    }
    os << '\n';
  }
}

// Binary 16-bit PGM, values in [0, 1] scaled to 0..65535, big-endian.
// Masked cells are 0.
void write_pgm(const std::filesystem::path& path, const PredictionMesh& mesh,
               const std::vector<double>& values) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + path.string());
  os << "P5\n" << mesh.nx << ' ' << mesh.ny << "\n65535\n";
  for (int r = mesh.ny - 1; r >= 0; --r)
    for (int c = 0; c < mesh.nx; ++c) {
      const auto idx = static_cast<std::size_t>(r * mesh.nx + c);
      const double v = mesh.active[idx] ? std::clamp(values[idx], 0.0, 1.0) : 0.0;
      const auto w = static_cast<unsigned>(std::lround(v * 65535.0));
      os.put(static_cast<char>(w >> 8));
      os.put(static_cast<char>(w & 0xff));
    }
}

std::string file_safe(const std::string& s) {
  std::string out;
  for (char ch : s) out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-') ? ch : '_';
  return out;
}

}  // namespace

void write_prediction(const std::string& dir, const PredictionMesh& mesh, const CoverDraws& draws,
                      const TotalCover& totals) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto active = mesh.active_cells();
  if (active.size() != draws.sites.size())
    throw ValidationError("write_prediction: draws were not made on this mesh");
  const int species = static_cast<int>(draws.species.size());
  const double nd = draws.draws();
  nlohmann::json summary;
  summary["mesh"] = {{"nx", mesh.nx},       {"ny", mesh.ny},
                     {"origin_x", mesh.origin_x}, {"origin_y", mesh.origin_y},
                     {"cell_area", mesh.cell_area()}, {"active_cells", active.size()}};
  summary["draws"] = draws.draws();
  for (int j = 0; j < species; ++j) {
    std::vector<double> mean(static_cast<std::size_t>(mesh.cells()), 0.0);
    std::vector<double> sd(mean.size(), 0.0);
    for (std::size_t a = 0; a < active.size(); ++a) {
      double s = 0.0, s2 = 0.0;
      for (const auto& c : draws.cover) {
        const double v = c(j, static_cast<Eigen::Index>(a));
        s += v;
        s2 += v * v;
      }
      const double mu = s / nd;
      const auto cell = static_cast<std::size_t>(active[a]);
      mean[cell] = mu;
      sd[cell] = nd > 1 ? std::sqrt(std::max(0.0, (s2 - nd * mu * mu) / (nd - 1))) : 0.0;
    }
    const std::string stem = file_safe(draws.species[static_cast<std::size_t>(j)]);
    write_grid(fs::path(dir) / (stem + "_mean.csv"), mesh, mean);
    write_grid(fs::path(dir) / (stem + "_sd.csv"), mesh, sd);
    write_pgm(fs::path(dir) / (stem + "_mean.pgm"), mesh, mean);
  }
  {
    std::ofstream os(fs::path(dir) / "totals.csv");
    if (!os) throw ValidationError("cannot write totals.csv");
    for (std::size_t c = 0; c < totals.names.size(); ++c) os << (c ? "," : "") << totals.names[c];
    os << '\n';
    char buf[32];
    for (Eigen::Index r = 0; r < totals.draws.rows(); ++r) {
      for (Eigen::Index c = 0; c < totals.draws.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", totals.draws(r, c));
        os << (c ? "," : "") << buf;
      }
      os << '\n';
    }
  }
  auto& tot = summary["totals"];
  for (std::size_t c = 0; c < totals.names.size(); ++c) {
    const auto i = static_cast<Eigen::Index>(c);
    tot.push_back({{"name", totals.names[c]},
                   {"mean", totals.mean(i)},
                   {"lower", totals.lower(i)},
                   {"upper", totals.upper(i)},
                   {"level", totals.level}});
  }
  std::ofstream os(fs::path(dir) / "summary.json");
  if (!os) throw ValidationError("cannot write summary.json");
  os << summary.dump(2) << '\n';
}

}  // namespace jsdm
