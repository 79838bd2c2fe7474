#include "jsdm/model.hpp"

#include "jsdm/errors.hpp"
#include "jsdm/kernels.hpp"
#include "jsdm/latent_field.hpp"
#include "jsdm/observation.hpp"
#include "jsdm/special.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace jsdm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

std::string normalize_name(const std::string& name) {
  std::string out;
  for (char c : name) {
    if (c == '(' || c == ')' || c == ' ') continue;
    if (c == '+' || c == '_') c = '-';
    out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// ModelSpec

ModelSpec ModelSpec::from_name(const std::string& name) {
  const std::string s = normalize_name(name);
  std::vector<std::string> parts;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, '-');)
    if (!part.empty()) parts.push_back(part);
  auto bad = [&] { return ValidationError("unknown model name '" + name + "'"); };
  if (parts.size() < 2) throw bad();

  ModelSpec spec;
  const std::string& obs = parts.back();
  if (obs == "BB")
    spec.observation = ObservationKind::BetaBinomial;
  else if (obs == "DM")
    spec.observation = ObservationKind::DirichletMultinomial;
  else
    throw bad();

  const std::string& lat = parts.front();
  if (lat == "C") {
    if (parts.size() != 2) throw bad();
    spec.latent = LatentKind::Constant;
    return spec;
  }
  if (parts.size() != 3) throw bad();
  if (lat == "IGP") {
    spec.latent = LatentKind::Independent;
  } else if (lat.rfind("LMC", 0) == 0) {
    spec.latent = LatentKind::Coregionalized;
    const std::string k = lat.substr(3);
    if (k.empty() || !std::all_of(k.begin(), k.end(), [](char c) { return std::isdigit(c); }))
      throw bad();
    spec.k_distinct = std::stoi(k);
    if (spec.k_distinct < 1) throw bad();
  } else {
    throw bad();
  }
  if (parts[1] == "S")
    spec.kernel = KernelKind::Stationary;
  else if (parts[1] == "NS")
    spec.kernel = KernelKind::NonStationary;
  else
    throw bad();
  return spec;
}

std::string ModelSpec::name() const {
  std::string out;
  switch (latent) {
    case LatentKind::Constant: out = "C"; break;
    case LatentKind::Independent: out = "IGP"; break;
    case LatentKind::Coregionalized: out = "LMC" + std::to_string(k_distinct); break;
  }
  if (latent != LatentKind::Constant) out += kernel == KernelKind::Stationary ? "-S" : "-NS";
  out += observation == ObservationKind::BetaBinomial ? "-BB" : "-DM";
  return out;
}

std::vector<std::string> ModelSpec::table_names() {
  return {"C-BB",      "C-DM",       "IGP-S-BB",  "IGP-NS-BB",  "IGP-S-DM",  "IGP-NS-DM",
          "LMC1-S-BB", "LMC1-NS-BB", "LMC1-S-DM", "LMC1-NS-DM", "LMC2-S-DM", "LMC2-NS-DM"};
}

void ModelSpec::validate(int n_species) const {
  priors.validate();
  if (!(rel_jitter > 0.0)) throw ValidationError("jitter must be positive");
  if (latent == LatentKind::Coregionalized) {
    if (n_species < 2) throw ValidationError("LMC models need at least two species");
    if (k_distinct < 1 || k_distinct > n_species)
      throw ValidationError("LMC(k) needs 1 <= k <= J");
    if (!kernel_of_component.empty()) {
      if (static_cast<int>(kernel_of_component.size()) != n_species)
        throw ValidationError("kernel_of_component must have one entry per species");
      std::vector<int> used(static_cast<std::size_t>(k_distinct), 0);
      for (int k : kernel_of_component) {
        if (k < 0 || k >= k_distinct)
          throw ValidationError("kernel_of_component entry out of range");
        used[static_cast<std::size_t>(k)] = 1;
      }
      if (std::find(used.begin(), used.end(), 0) != used.end())
        throw ValidationError("kernel_of_component leaves a kernel unused");
    }
  }
}

// ---------------------------------------------------------------------------
// Layout

ParameterLayout make_layout(const ModelSpec& spec, int species, int obs_groups, int plots) {
  ParameterLayout l;
  l.species = species;
  l.plots = plots;
  l.obs_groups = obs_groups;
  l.latent = spec.latent;
  l.nonstationary = spec.spatial() && spec.kernel == KernelKind::NonStationary;
  switch (spec.latent) {
    case LatentKind::Constant: l.kernels = 0; break;
    case LatentKind::Independent: l.kernels = species; break;
    case LatentKind::Coregionalized: l.kernels = spec.k_distinct; break;
  }
  int off = 0;
  l.beta = off;
  off += species;
  l.log_gamma = off;
  off += obs_groups;
  l.kernel_params = off;
  off += l.kernels * l.params_per_kernel();
  if (spec.latent == LatentKind::Independent) {
    l.log_sd = off;
    off += species;
  }
  if (spec.latent == LatentKind::Coregionalized) {
    l.log_omega = off;
    off += species;
    l.corr_free = off;
    off += species * (species - 1) / 2;
  }
  if (l.nonstationary) {
    l.z_field = off;
    off += l.kernels * plots;
  }
  if (spec.spatial()) {
    l.z = off;
    off += species * plots;
  }
  l.dim = off;
  return l;
}

int dimension(const ModelSpec& spec, int species, int declared_groups, int plots) {
  const int obs = spec.observation == ObservationKind::BetaBinomial ? species : declared_groups;
  return make_layout(spec, species, obs, plots).dim;
}

std::vector<std::string> ParameterLayout::names() const {
  std::vector<std::string> out(static_cast<std::size_t>(dim));
  auto set = [&](int idx, std::string s) { out[static_cast<std::size_t>(idx)] = std::move(s); };
  for (int j = 0; j < species; ++j) set(beta + j, "beta[" + std::to_string(j) + "]");
  for (int g = 0; g < obs_groups; ++g) set(log_gamma + g, "log_gamma[" + std::to_string(g) + "]");
  for (int k = 0; k < kernels; ++k) {
    const std::string p = "kernel[" + std::to_string(k) + "].";
    const int o = kernel_params + k * params_per_kernel();
    if (nonstationary) {
      set(o, p + "lengthscale_mean");
      set(o + 1, p + "log_field_length_scale");
      set(o + 2, p + "log_field_variance");
    } else {
      set(o, p + "log_length_scale");
    }
  }
  if (log_sd >= 0)
    for (int j = 0; j < species; ++j) set(log_sd + j, "log_sd[" + std::to_string(j) + "]");
  if (log_omega >= 0) {
    for (int j = 0; j < species; ++j) set(log_omega + j, "log_omega[" + std::to_string(j) + "]");
    int c = 0;
    for (int i = 1; i < species; ++i)
      for (int j = 0; j < i; ++j)
        set(corr_free + c++, "corr_free[" + std::to_string(i) + "," + std::to_string(j) + "]");
  }
  if (z_field >= 0)
    for (int k = 0; k < kernels; ++k)
      for (int i = 0; i < plots; ++i)
        set(z_field + k * plots + i,
            "z_field[" + std::to_string(k) + "," + std::to_string(i) + "]");
  if (z >= 0)
    for (int j = 0; j < species; ++j)
      for (int i = 0; i < plots; ++i)
        set(z + j * plots + i, "z[" + std::to_string(j) + "," + std::to_string(i) + "]");
  return out;
}

ParameterState ParameterState::unpack(const ParameterLayout& l, const Vector& theta) {
  if (theta.size() != l.dim) throw ValidationError("parameter vector has wrong dimension");
  ParameterState s;
  s.beta = theta.segment(l.beta, l.species);
  s.log_gamma = theta.segment(l.log_gamma, l.obs_groups);
  s.kernel_params.resize(l.kernels, l.params_per_kernel());
  for (int k = 0; k < l.kernels; ++k)
    for (int p = 0; p < l.params_per_kernel(); ++p)
      s.kernel_params(k, p) = theta(l.kernel_params + k * l.params_per_kernel() + p);
  if (l.log_sd >= 0) s.log_sd = theta.segment(l.log_sd, l.species);
  if (l.log_omega >= 0) {
    s.log_omega = theta.segment(l.log_omega, l.species);
    s.corr_free = theta.segment(l.corr_free, l.species * (l.species - 1) / 2);
  }
  if (l.z_field >= 0) {
    s.z_field.resize(l.kernels, l.plots);
    for (int k = 0; k < l.kernels; ++k)
      s.z_field.row(k) = theta.segment(l.z_field + k * l.plots, l.plots).transpose();
  }
  if (l.z >= 0) {
    s.z.resize(l.species, l.plots);
    for (int j = 0; j < l.species; ++j)
      s.z.row(j) = theta.segment(l.z + j * l.plots, l.plots).transpose();
  }
  return s;
}

Vector ParameterState::pack(const ParameterLayout& l) const {
  Vector theta(l.dim);
  theta.segment(l.beta, l.species) = beta;
  theta.segment(l.log_gamma, l.obs_groups) = log_gamma;
  for (int k = 0; k < l.kernels; ++k)
    for (int p = 0; p < l.params_per_kernel(); ++p)
      theta(l.kernel_params + k * l.params_per_kernel() + p) = kernel_params(k, p);
  if (l.log_sd >= 0) theta.segment(l.log_sd, l.species) = log_sd;
  if (l.log_omega >= 0) {
    theta.segment(l.log_omega, l.species) = log_omega;
    theta.segment(l.corr_free, l.species * (l.species - 1) / 2) = corr_free;
  }
  if (l.z_field >= 0)
    for (int k = 0; k < l.kernels; ++k)
      theta.segment(l.z_field + k * l.plots, l.plots) = z_field.row(k).transpose();
  if (l.z >= 0)
    for (int j = 0; j < l.species; ++j)
      theta.segment(l.z + j * l.plots, l.plots) = z.row(j).transpose();
  return theta;
}

// ---------------------------------------------------------------------------
// Model

struct Model::Workspace {
  double lp = 0.0;
  Vector beta, gamma;
  std::vector<KernelState> kernels;
  Vector sd;      // IGP magnitudes
  Vector omega;   // LMC
  CorrCholesky corr;
  Matrix mixing;  // J x J
  Matrix z;       // J x n
  Matrix u;       // J x n
  Matrix f;       // J x n
  // adjoints
  Matrix f_bar;
  Vector gamma_bar;
};

Model::Model(ModelSpec spec, const Dataset& data)
    : spec_(std::move(spec)), data_(data), failures_(std::make_shared<std::atomic<long>>(0)) {
  data_.validate();
  spec_.validate(data_.species());
  obs_groups_ = spec_.observation == ObservationKind::BetaBinomial ? data_.groups.singletons()
                                                                    : data_.groups;
  const int n = data_.plots();
  const int j = data_.species();
  layout_ = make_layout(spec_, j, obs_groups_.groups(), n);
  if (spec_.latent == LatentKind::Coregionalized) {
    kernel_of_component_ = spec_.kernel_of_component.empty()
                               ? lmc_kernel_map(j, spec_.k_distinct)
                               : spec_.kernel_of_component;
  } else if (spec_.latent == LatentKind::Independent) {
    for (int s = 0; s < j; ++s) kernel_of_component_.push_back(s);
  }
  if (spec_.spatial()) dist_ = distance_matrix(data_.locations);

  const int p = obs_groups_.groups();
  cell_counts_.resize(static_cast<std::size_t>(n * p));
  cell_trials_.resize(static_cast<std::size_t>(n * p));
  cell_const_.resize(static_cast<std::size_t>(n * p));
  for (int i = 0; i < n; ++i) {
    for (int g = 0; g < p; ++g) {
      const auto idx = static_cast<std::size_t>(i * p + g);
      const auto& mem = obs_groups_.members[static_cast<std::size_t>(g)];
      const int trials = obs_groups_.resolution(i, g);
      std::vector<int> y;
      int total = 0;
      for (int s : mem) {
        y.push_back(data_.counts(i, s));
        total += data_.counts(i, s);
      }
      y.push_back(trials - total);
      double c = log_gamma(trials + 1.0);
      for (int v : y) c -= log_gamma(v + 1.0);
      cell_counts_[idx] = std::move(y);
      cell_trials_[idx] = trials;
      cell_const_[idx] = c;
    }
  }
}

bool Model::forward(const Vector& theta, Workspace& ws) const {
  const auto& l = layout_;
  const auto& pr = spec_.priors;
  const int n = l.plots;
  const int j = l.species;
  double lp = 0.0;

  ws.beta = theta.segment(l.beta, j);
  for (int s = 0; s < j; ++s) lp += pr.intercept.logpdf(ws.beta(s)).value;

  ws.gamma.resize(l.obs_groups);
  for (int g = 0; g < l.obs_groups; ++g) {
    const double u = theta(l.log_gamma + g);
    ws.gamma(g) = std::exp(u);
    lp += pr.concentration.logpdf_log_scale(u).value;
  }

  ws.kernels.assign(static_cast<std::size_t>(l.kernels), KernelState{});
  for (int k = 0; k < l.kernels; ++k) {
    auto& ks = ws.kernels[static_cast<std::size_t>(k)];
    const int o = l.kernel_params + k * l.params_per_kernel();
    JitteredCholesky chol;
    if (!l.nonstationary) {
      const double u = theta(o);
      ks.length_scale = std::exp(u);
      lp += pr.length_scale.logpdf_log_scale(u).value;
      ks.cov = (-dist_.array() / ks.length_scale).exp().matrix();
    } else {
      ks.field_mean = theta(o);
      ks.field_length_scale = std::exp(theta(o + 1));
      ks.field_variance = std::exp(theta(o + 2));
      lp += pr.lengthscale_mean.logpdf(ks.field_mean).value;
      lp += pr.field_length_scale.logpdf_log_scale(theta(o + 1)).value;
      lp += pr.field_variance.logpdf_log_scale(theta(o + 2)).value;
      ks.field_z = theta.segment(l.z_field + k * n, n);
      lp += -0.5 * ks.field_z.squaredNorm() - n * kHalfLog2Pi;
      const Matrix field_cov =
          ks.field_variance * (-dist_.array() / ks.field_length_scale).exp().matrix();
      JitteredCholesky fchol;
      if (!try_cholesky_with_jitter(field_cov, spec_.rel_jitter, 4, fchol)) return false;
      ks.field_chol = std::move(fchol.lower);
      ks.field_jitter = fchol.jitter;
      Vector log_l = ks.field_chol.triangularView<Eigen::Lower>() * ks.field_z;
      log_l.array() += ks.field_mean;
      ks.length_scales = log_l.array().exp();
      if (!ks.length_scales.allFinite() || (ks.length_scales.array() <= 0.0).any()) return false;
      const Vector& ls = ks.length_scales;
      ks.cov = assemble_cov(static_cast<std::size_t>(n), [&](std::size_t a, std::size_t b) {
        return a == b ? 1.0
                      : matern32_nonstat_from_distance(dist_(static_cast<Eigen::Index>(a),
                                                             static_cast<Eigen::Index>(b)),
                                                       ls(static_cast<Eigen::Index>(a)),
                                                       ls(static_cast<Eigen::Index>(b)));
      });
    }
    if (!try_cholesky_with_jitter(ks.cov, spec_.rel_jitter, 4, chol)) return false;
    ks.chol = std::move(chol.lower);
    ks.jitter = chol.jitter;
  }

  if (spec_.latent == LatentKind::Constant) {
    ws.f = ws.beta.replicate(1, n);
  } else {
    ws.z.resize(j, n);
    for (int s = 0; s < j; ++s) ws.z.row(s) = theta.segment(l.z + s * n, n).transpose();
    lp += -0.5 * ws.z.squaredNorm() - j * n * kHalfLog2Pi;
    ws.u.resize(j, n);
    for (int c = 0; c < j; ++c) {
      const auto& ks = ws.kernels[static_cast<std::size_t>(kernel_of_component_[c])];
      ws.u.row(c) = (ks.chol.triangularView<Eigen::Lower>() * ws.z.row(c).transpose()).transpose();
    }
    if (spec_.latent == LatentKind::Independent) {
      ws.sd.resize(j);
      for (int s = 0; s < j; ++s) {
        const double u = theta(l.log_sd + s);
        ws.sd(s) = std::exp(u);
        lp += pr.coreg_sd.logpdf_log_scale(u).value;
      }
      ws.mixing = ws.sd.asDiagonal();
    } else {
      ws.omega.resize(j);
      for (int s = 0; s < j; ++s) {
        const double u = theta(l.log_omega + s);
        ws.omega(s) = std::exp(u);
        lp += pr.coreg_sd.logpdf_log_scale(u).value;
      }
      ws.corr = corr_cholesky_constrain(theta.data() + l.corr_free, j);
      double lkj = 0.0;
      for (int i = 1; i < j; ++i)
        lkj += (static_cast<double>(j - i - 1) + 2.0 * pr.lkj_shape - 2.0) *
               std::log(ws.corr.lower(i, i));
      lp += lkj + ws.corr.log_jacobian;
      ws.mixing = ws.omega.asDiagonal() * ws.corr.lower;
    }
    ws.f = ws.mixing * ws.u;
    ws.f.colwise() += ws.beta;
  }
  ws.lp = lp;
  return std::isfinite(lp);
}

double Model::likelihood(Workspace& ws, bool want_grad) const {
  const int n = layout_.plots;
  const int p = obs_groups_.groups();
  if (want_grad) {
    ws.f_bar = Matrix::Zero(layout_.species, n);
    ws.gamma_bar = Vector::Zero(p);
  }
  double total = 0.0;
  std::vector<double> fv, alpha;
  for (int i = 0; i < n; ++i) {
    for (int g = 0; g < p; ++g) {
      const auto idx = static_cast<std::size_t>(i * p + g);
      const auto& mem = obs_groups_.members[static_cast<std::size_t>(g)];
      const auto& y = cell_counts_[idx];
      const int trials = cell_trials_[idx];
      if (trials == 0) continue;
      fv.resize(mem.size());
      for (std::size_t a = 0; a < mem.size(); ++a) fv[a] = ws.f(mem[a], i);
      alpha = softmax_alpha(fv);
      const double gamma = ws.gamma(g);
      double v = cell_const_[idx] - log_rising(gamma, trials);
      double dgam = want_grad ? -digamma_rising(gamma, trials) : 0.0;
      double weighted = 0.0;  // sum_c alpha_c abar_c
      const std::size_t classes = alpha.size();
      double abar_local[64];
      std::vector<double> abar_heap;
      double* abar = abar_local;
      if (classes > 64) {
        abar_heap.resize(classes);
        abar = abar_heap.data();
      }
      for (std::size_t c = 0; c < classes; ++c) {
        const double a = alpha[c] * gamma;
        v += log_rising(a, y[c]);
        if (want_grad) {
          const double da = digamma_rising(a, y[c]);
          abar[c] = gamma * da;
          dgam += alpha[c] * da;
          weighted += alpha[c] * abar[c];
        }
      }
      total += v;
      if (want_grad) {
        ws.gamma_bar(g) += dgam;
        for (std::size_t a = 0; a < mem.size(); ++a)
          ws.f_bar(mem[a], i) += alpha[a] * (abar[a] - weighted);
      }
    }
  }
  return total;
}

void Model::backward(const Vector& theta, Workspace& ws, Vector& grad) const {
  const auto& l = layout_;
  const auto& pr = spec_.priors;
  const int n = l.plots;
  const int j = l.species;
  grad.setZero(l.dim);

  for (int s = 0; s < j; ++s)
    grad(l.beta + s) = pr.intercept.logpdf(ws.beta(s)).grad + ws.f_bar.row(s).sum();
  for (int g = 0; g < l.obs_groups; ++g)
    grad(l.log_gamma + g) = pr.concentration.logpdf_log_scale(theta(l.log_gamma + g)).grad +
                            ws.gamma_bar(g) * ws.gamma(g);

  if (spec_.latent == LatentKind::Constant) return;

  // eps = mixing * U
  const Matrix& e_bar = ws.f_bar;
  const Matrix u_bar = ws.mixing.transpose() * e_bar;
  if (spec_.latent == LatentKind::Independent) {
    for (int s = 0; s < j; ++s) {
      const double sd_bar = e_bar.row(s).dot(ws.u.row(s));
      grad(l.log_sd + s) =
          pr.coreg_sd.logpdf_log_scale(theta(l.log_sd + s)).grad + sd_bar * ws.sd(s);
    }
  } else {
    const Matrix mix_bar = e_bar * ws.u.transpose();  // lower triangle used
    Matrix corr_bar = Matrix::Zero(j, j);
    for (int s = 0; s < j; ++s) {
      double omega_bar = 0.0;
      for (int c = 0; c <= s; ++c) {
        omega_bar += mix_bar(s, c) * ws.corr.lower(s, c);
        corr_bar(s, c) = ws.omega(s) * mix_bar(s, c);
      }
      grad(l.log_omega + s) =
          pr.coreg_sd.logpdf_log_scale(theta(l.log_omega + s)).grad + omega_bar * ws.omega(s);
    }
    for (int i = 1; i < j; ++i)
      corr_bar(i, i) +=
          (static_cast<double>(j - i - 1) + 2.0 * pr.lkj_shape - 2.0) / ws.corr.lower(i, i);
    corr_cholesky_backprop(theta.data() + l.corr_free, j, corr_bar, 1.0,
                           grad.data() + l.corr_free);
  }

  // U rows: u_c = chol_{kappa(c)} z_c
  std::vector<Matrix> chol_bar(static_cast<std::size_t>(l.kernels));
  for (auto& m : chol_bar) m = Matrix::Zero(n, n);
  for (int c = 0; c < j; ++c) {
    const int k = kernel_of_component_[c];
    const auto& ks = ws.kernels[static_cast<std::size_t>(k)];
    const Vector ub = u_bar.row(c).transpose();
    const Vector zc = ws.z.row(c).transpose();
    const Vector zb = ks.chol.triangularView<Eigen::Lower>().transpose() * ub;
    for (int i = 0; i < n; ++i) grad(l.z + c * n + i) = zb(i) - zc(i);
    chol_bar[static_cast<std::size_t>(k)].noalias() += ub * zc.transpose();
  }

  for (int k = 0; k < l.kernels; ++k) {
    const auto& ks = ws.kernels[static_cast<std::size_t>(k)];
    const int o = l.kernel_params + k * l.params_per_kernel();
    const Matrix cov_bar = cholesky_reverse(ks.chol, chol_bar[static_cast<std::size_t>(k)]);
    if (!l.nonstationary) {
      double s = 0.0;
      for (int b = 0; b < n; ++b)
        for (int a = b + 1; a < n; ++a) s += cov_bar(a, b) * ks.cov(a, b) * dist_(a, b);
      grad(o) = pr.length_scale.logpdf_log_scale(theta(o)).grad + s / ks.length_scale;
      continue;
    }
    // d cov / d log l at each location
    Vector a_bar = Vector::Zero(n);
    const Vector& ls = ks.length_scales;
    for (int b = 0; b < n; ++b)
      for (int a = b + 1; a < n; ++a) {
        const double w = cov_bar(a, b);
        if (w == 0.0) continue;
        const auto d = matern32_nonstat_derivs(dist_(a, b), ls(a), ls(b));
        a_bar(a) += w * d.d_log_ls;
        a_bar(b) += w * d.d_log_lt;
      }
    // log l = mean + field_chol z_field
    double mean_bar = a_bar.sum();
    const Vector zf_bar = ks.field_chol.triangularView<Eigen::Lower>().transpose() * a_bar;
    for (int i = 0; i < n; ++i) grad(l.z_field + k * n + i) = zf_bar(i) - ks.field_z(i);
    const Matrix fchol_bar = a_bar * ks.field_z.transpose();
    const Matrix fcov_bar = cholesky_reverse(ks.field_chol, fchol_bar);
    double ls_bar = 0.0;
    double var_bar = 0.0;
    const double inv_l = 1.0 / ks.field_length_scale;
    for (int b = 0; b < n; ++b) {
      var_bar += fcov_bar(b, b) * (ks.field_variance + ks.field_jitter);
      for (int a = b + 1; a < n; ++a) {
        const double c = ks.field_variance * std::exp(-dist_(a, b) * inv_l);
        ls_bar += fcov_bar(a, b) * c * dist_(a, b) * inv_l;
        var_bar += fcov_bar(a, b) * c;
      }
    }
    grad(o) = pr.lengthscale_mean.logpdf(theta(o)).grad + mean_bar;
    grad(o + 1) = pr.field_length_scale.logpdf_log_scale(theta(o + 1)).grad + ls_bar;
    grad(o + 2) = pr.field_variance.logpdf_log_scale(theta(o + 2)).grad + var_bar;
  }
}

double Model::evaluate(const Vector& theta, Vector* grad) const {
  if (theta.size() != layout_.dim) throw ValidationError("parameter vector has wrong dimension");
  Workspace ws;
  double value = kNegInf;
  try {
    if (theta.allFinite() && forward(theta, ws)) {
      value = ws.lp + likelihood(ws, grad != nullptr);
      if (grad) {
        backward(theta, ws, *grad);
        if (!grad->allFinite()) value = kNegInf;
      }
    }
  } catch (const DomainError&) {
    value = kNegInf;
  }
  if (!std::isfinite(value)) {
    failures_->fetch_add(1, std::memory_order_relaxed);
    if (grad) grad->setZero(layout_.dim);
    return kNegInf;
  }
  return value;
}

double Model::log_posterior(const Vector& theta) const { return evaluate(theta, nullptr); }

double Model::log_posterior_grad(const Vector& theta, Vector& grad) const {
  return evaluate(theta, &grad);
}

LatentState Model::latent_state(const Vector& theta) const {
  if (theta.size() != layout_.dim) throw ValidationError("parameter vector has wrong dimension");
  Workspace ws;
  if (!forward(theta, ws)) throw NumericalError("latent state: covariance factorization failed");
  LatentState out;
  out.beta = ws.beta;
  out.gamma = ws.gamma;
  out.kernels = std::move(ws.kernels);
  out.kernel_of_component = kernel_of_component_;
  out.mixing = ws.mixing;
  out.z = ws.z;
  out.u = ws.u;
  out.f = ws.f;
  return out;
}

Vector Model::sample_prior(Rng& rng) const {
  const auto& l = layout_;
  const auto& pr = spec_.priors;
  Vector theta(l.dim);
  for (int s = 0; s < l.species; ++s) theta(l.beta + s) = pr.intercept.sample(rng);
  for (int g = 0; g < l.obs_groups; ++g)
    theta(l.log_gamma + g) = std::log(pr.concentration.sample(rng));
  for (int k = 0; k < l.kernels; ++k) {
    const int o = l.kernel_params + k * l.params_per_kernel();
    if (l.nonstationary) {
      theta(o) = pr.lengthscale_mean.sample(rng);
      theta(o + 1) = std::log(pr.field_length_scale.sample(rng));
      theta(o + 2) = std::log(pr.field_variance.sample(rng));
    } else {
      theta(o) = std::log(pr.length_scale.sample(rng));
    }
  }
  if (l.log_sd >= 0)
    for (int s = 0; s < l.species; ++s) theta(l.log_sd + s) = std::log(pr.coreg_sd.sample(rng));
  if (l.log_omega >= 0) {
    for (int s = 0; s < l.species; ++s)
      theta(l.log_omega + s) = std::log(pr.coreg_sd.sample(rng));
    // Canonical partial correlations of LKJ(eta): column c of the factor is
    // Beta(b, b) on (-1, 1) with b = eta + (J - 2 - c) / 2.
    int idx = l.corr_free;
    for (int i = 1; i < l.species; ++i)
      for (int c = 0; c < i; ++c) {
        const double b = pr.lkj_shape + 0.5 * (l.species - 2 - c);
        const double x = log_gamma_variate(rng, b);
        const double y = log_gamma_variate(rng, b);
        // 2 B - 1 with B = e^x / (e^x + e^y)  =>  tanh((x - y) / 2)
        theta(idx++) = 0.5 * (x - y);
      }
  }
  if (l.z_field >= 0)
    for (int i = 0; i < l.kernels * l.plots; ++i) theta(l.z_field + i) = standard_normal(rng);
  if (l.z >= 0)
    for (int i = 0; i < l.species * l.plots; ++i) theta(l.z + i) = standard_normal(rng);
  return theta;
}

}  // namespace jsdm
