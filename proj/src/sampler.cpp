#include "jsdm/sampler.hpp"

#include "jsdm/errors.hpp"
#include "jsdm/model.hpp"
#include "jsdm/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

namespace jsdm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kMaxEnergyError = 1000.0;

double kinetic(const Vector& p, const Vector& inv_mass) {
  return 0.5 * (p.array().square() * inv_mass.array()).sum();
}

Vector draw_momentum(Rng& rng, const Vector& inv_mass) {
  Vector p(inv_mass.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = standard_normal(rng) / std::sqrt(inv_mass(i));
  return p;
}

// Stan-style heuristic: double or halve until the one-step acceptance
// crosses 0.8.
double initial_step_size(const Vector& theta, double lp, const Vector& grad, const LogDensityFn& f,
                         double step, const Vector& inv_mass, Rng& rng) {
  const double log_target = std::log(0.8);
  int direction = 0;
  Vector g(grad.size());
  for (int iter = 0; iter < 100; ++iter) {
    Vector p = draw_momentum(rng, inv_mass);
    const double h0 = -lp + kinetic(p, inv_mass);
    p += 0.5 * step * grad;
    Vector q = theta + step * inv_mass.cwiseProduct(p);
    const double lp1 = f(q, g);
    double delta = kNegInf;
    if (std::isfinite(lp1)) {
      p += 0.5 * step * g;
      delta = h0 - (-lp1 + kinetic(p, inv_mass));
      if (!std::isfinite(delta)) delta = kNegInf;
    }
    if (direction == 0) direction = delta > log_target ? 1 : -1;
    if (direction == 1 && !(delta > log_target)) break;
    if (direction == -1 && !(delta < log_target)) break;
    step = direction == 1 ? 2.0 * step : 0.5 * step;
    if (step > 1e7 || step < 1e-12) break;
  }
  return std::clamp(step, 1e-12, 1e7);
}

int jittered_steps(double step, const SamplerConfig& cfg, Rng& rng) {
  const int base = std::clamp(static_cast<int>(std::ceil(cfg.integration_time / step)), 1,
                              cfg.max_leapfrog);
  const int lo = (base + 1) / 2;
  const int hi = std::max(lo, (3 * base) / 2);
  return lo + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(hi - lo + 1)));
}

struct Welford {
  int n = 0;
  Vector mean, m2;
  void reset(int dim) {
    n = 0;
    mean = Vector::Zero(dim);
    m2 = Vector::Zero(dim);
  }
  void add(const Vector& x) {
    ++n;
    const Vector delta = x - mean;
    mean += delta / n;
    m2 += delta.cwiseProduct(x - mean);
  }
  // Regularized towards 1e-3, as in Stan.
  Vector regularized_variance() const {
    const Vector var = m2 / std::max(1, n - 1);
    const double w = static_cast<double>(n) / (n + 5.0);
    return (w * var.array() + 1e-3 * (5.0 / (n + 5.0))).matrix();
  }
};

ChainResult run_chain(const LogDensityFn& f, int dim, const SamplerConfig& cfg, int chain,
                      const std::function<Vector(Rng&)>& init) {
  const auto chain_id = static_cast<std::uint64_t>(chain);
  Rng init_rng = make_stream(cfg.seed, chain_id, std::numeric_limits<std::uint64_t>::max());
  Vector theta, grad(dim);
  double lp = kNegInf;
  for (int attempt = 0; attempt < 100 && !std::isfinite(lp); ++attempt) {
    if (init) {
      theta = init(init_rng);
    } else {
      theta.resize(dim);
      for (int i = 0; i < dim; ++i) theta(i) = cfg.init_radius * (2.0 * uniform_open(init_rng) - 1.0);
    }
    lp = f(theta, grad);
  }
  if (!std::isfinite(lp))
    throw NumericalError("chain " + std::to_string(chain) +
                         ": no finite initial state after 100 attempts");

  Vector inv_mass = Vector::Ones(dim);
  const auto schedule = WarmupSchedule::make(cfg.warmup);
  std::size_t next_window = 0;
  Welford welford;
  welford.reset(dim);
  double step = 1.0;
  DualAveraging da(cfg.target_accept, step);

  ChainResult out;
  const int kept = cfg.iterations - cfg.warmup;
  out.draws.resize(kept, dim);
  out.log_density.resize(kept);

  for (int it = 0; it < cfg.iterations; ++it) {
    Rng rng = make_stream(cfg.seed, chain_id, static_cast<std::uint64_t>(it));
    if (it == 0) {
      step = initial_step_size(theta, lp, grad, f, step, inv_mass, rng);
      da.restart(step);
    }
    const int steps = jittered_steps(step, cfg, rng);
    auto tr = hmc_draw(theta, lp, grad, f, step, inv_mass, steps, rng);
    theta = std::move(tr.theta);
    lp = tr.log_density;
    grad = std::move(tr.grad);

    if (it < cfg.warmup) {
      if (tr.divergent) ++out.warmup_divergences;
      step = da.update(tr.accept_prob);
      const bool in_slow = next_window < schedule.window_ends.size() && it >= schedule.init_buffer;
      if (in_slow) welford.add(theta);
      if (next_window < schedule.window_ends.size() && it + 1 == schedule.window_ends[next_window]) {
        inv_mass = welford.regularized_variance();
        welford.reset(dim);
        ++next_window;
        step = initial_step_size(theta, lp, grad, f, step, inv_mass, rng);
        da.restart(step);
      }
      if (it + 1 == cfg.warmup) step = da.final_step();
    } else {
      const int row = it - cfg.warmup;
      out.draws.row(row) = theta.transpose();
      out.log_density(row) = lp;
      out.accept_prob.push_back(tr.accept_prob);
      out.steps.push_back(tr.steps);
      if (tr.divergent) ++out.divergences;
    }
  }
  out.step_size = step;
  out.inv_mass = inv_mass;
  return out;
}

double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Biased autocovariance at lag t.
double autocov(std::span<const double> x, double mean, std::size_t t) {
  double s = 0.0;
  for (std::size_t i = 0; i + t < x.size(); ++i) s += (x[i] - mean) * (x[i + t] - mean);
  return s / static_cast<double>(x.size());
}

// Geyer's initial monotone sequence on autocorrelations rho(t).
template <typename Rho>
double geyer_tau(Rho&& rho, std::size_t n) {
  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double pair = rho(2 * k) + rho(2 * k + 1);
    if (!(pair > 0.0)) break;
    pair = std::min(pair, prev_pair);
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  return tau;
}

void check_chains(const std::vector<std::span<const double>>& chains, std::size_t min_len) {
  if (chains.empty()) throw ValidationError("no chains given");
  for (const auto& c : chains)
    if (c.size() != chains.front().size())
      throw ValidationError("chains must have equal length");
  if (chains.front().size() < min_len)
    throw ValidationError("chains are too short for this diagnostic");
}

}  // namespace

void SamplerConfig::validate() const {
  if (chains < 1) throw ValidationError("sampler.chains must be >= 1");
  if (warmup < 0 || iterations <= warmup)
    throw ValidationError("sampler.warmup must be >= 0 and < sampler.iterations");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw ValidationError("sampler.target_accept must lie in (0, 1)");
  if (!(integration_time > 0.0)) throw ValidationError("sampler.integration_time must be positive");
  if (max_leapfrog < 1) throw ValidationError("sampler.max_leapfrog must be >= 1");
  if (!(init_radius >= 0.0)) throw ValidationError("sampler.init_radius must be >= 0");
  if (threads < 0) throw ValidationError("threads must be >= 0");
}

HmcTransition hmc_draw(const Vector& theta, double log_density, const Vector& grad,
                       const LogDensityFn& f, double step_size, const Vector& inv_mass,
                       int steps, Rng& rng) {
  HmcTransition out;
  out.theta = theta;
  out.log_density = log_density;
  out.grad = grad;
  out.steps = steps;
  if (steps <= 0) {
    out.accept_prob = 1.0;
    out.accepted = true;
    return out;
  }
  Vector p = draw_momentum(rng, inv_mass);
  const double h0 = -log_density + kinetic(p, inv_mass);
  Vector q = theta;
  Vector g = grad;
  double lp = log_density;
  bool failed = false;
  p += 0.5 * step_size * g;
  for (int s = 0; s < steps; ++s) {
    q += step_size * inv_mass.cwiseProduct(p);
    lp = f(q, g);
    if (!std::isfinite(lp)) {
      failed = true;
      break;
    }
    p += (s + 1 < steps ? 1.0 : 0.5) * step_size * g;
  }
  const double h1 = failed ? std::numeric_limits<double>::infinity() : -lp + kinetic(p, inv_mass);
  out.energy_error = h1 - h0;
  if (failed || !std::isfinite(h1) || out.energy_error > kMaxEnergyError) {
    out.divergent = true;
    out.accept_prob = 0.0;
    return out;
  }
  out.accept_prob = std::min(1.0, std::exp(h0 - h1));
  if (uniform_open(rng) < out.accept_prob) {
    out.accepted = true;
    out.theta = std::move(q);
    out.log_density = lp;
    out.grad = std::move(g);
  }
  return out;
}

DualAveraging::DualAveraging(double target, double initial_step) : target_(target) {
  restart(initial_step);
}

void DualAveraging::restart(double initial_step) {
  mu_ = std::log(10.0 * initial_step);
  s_bar_ = 0.0;
  x_bar_ = 0.0;
  counter_ = 0;
  step_ = initial_step;
}

double DualAveraging::update(double accept_prob) {
  constexpr double gamma = 0.15, t0 = 10.0, kappa = 0.75;
  ++counter_;
  const double a = std::min(1.0, accept_prob);
  const double eta = 1.0 / (counter_ + t0);
  s_bar_ = (1.0 - eta) * s_bar_ + eta * (target_ - a);
  const double x = mu_ - s_bar_ * std::sqrt(static_cast<double>(counter_)) / gamma;
  const double x_eta = std::pow(static_cast<double>(counter_), -kappa);
  x_bar_ = x_eta * x + (1.0 - x_eta) * x_bar_;
  step_ = std::exp(x);
  return step_;
}

double DualAveraging::final_step() const { return counter_ > 0 ? std::exp(x_bar_) : step_; }

WarmupSchedule WarmupSchedule::make(int warmup) {
  WarmupSchedule s;
  if (warmup < 20) {
    s.init_buffer = warmup;
    s.term_buffer = 0;
    s.base_window = 0;
    return s;
  }
  if (s.init_buffer + s.base_window + s.term_buffer > warmup) {
    s.init_buffer = static_cast<int>(0.15 * warmup);
    s.term_buffer = static_cast<int>(0.1 * warmup);
    s.base_window = warmup - (s.init_buffer + s.term_buffer);
  }
  const int last = warmup - s.term_buffer;
  int start = s.init_buffer;
  int size = s.base_window;
  while (true) {
    const int end = start + size;
    if (end + 2 * size > last) {
      s.window_ends.push_back(last);
      break;
    }
    s.window_ends.push_back(end);
    start = end;
    size *= 2;
  }
  return s;
}

int PosteriorRun::draws_per_chain() const {
  return chains.empty() ? 0 : static_cast<int>(chains.front().draws.rows());
}

Matrix PosteriorRun::pooled() const {
  const int n = draws_per_chain();
  Matrix out(n * static_cast<int>(chains.size()), dimension());
  for (std::size_t c = 0; c < chains.size(); ++c)
    out.middleRows(static_cast<Eigen::Index>(c) * n, n) = chains[c].draws;
  return out;
}

int PosteriorRun::divergences() const {
  int d = 0;
  for (const auto& c : chains) d += c.divergences;
  return d;
}

double PosteriorRun::mean_accept() const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& c : chains) {
    s += std::accumulate(c.accept_prob.begin(), c.accept_prob.end(), 0.0);
    n += c.accept_prob.size();
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

std::vector<ParameterSummary> PosteriorRun::summary() const {
  std::vector<ParameterSummary> out;
  const int n = draws_per_chain();
  std::vector<std::vector<double>> cols(chains.size());
  for (int p = 0; p < dimension(); ++p) {
    ParameterSummary s;
    s.name = names[static_cast<std::size_t>(p)];
    std::vector<std::span<const double>> spans;
    std::vector<double> all;
    for (std::size_t c = 0; c < chains.size(); ++c) {
      cols[c].resize(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) cols[c][static_cast<std::size_t>(i)] = chains[c].draws(i, p);
      spans.emplace_back(cols[c]);
      all.insert(all.end(), cols[c].begin(), cols[c].end());
    }
    s.mean = mean_of(all);
    double ss = 0.0;
    for (double v : all) ss += (v - s.mean) * (v - s.mean);
    s.sd = all.size() > 1 ? std::sqrt(ss / static_cast<double>(all.size() - 1)) : 0.0;
    std::sort(all.begin(), all.end());
    s.q05 = quantile_sorted(all, 0.05);
    s.q50 = quantile_sorted(all, 0.5);
    s.q95 = quantile_sorted(all, 0.95);
    if (n >= 4) {
      if (spans.size() >= 2) s.rhat = rhat(spans);
      s.split_rhat = split_rhat(spans);
      const auto e = ess_multichain(spans);
      s.ess = e.ess;
      s.degenerate = e.degenerate;
    }
    out.push_back(std::move(s));
  }
  return out;
}

PosteriorRun run_sampler(const LogDensityFn& f, int dim, const SamplerConfig& config,
                         const std::function<Vector(Rng&)>& init) {
  config.validate();
  PosteriorRun out;
  out.config = config;
  out.chains.resize(static_cast<std::size_t>(config.chains));
  for (int p = 0; p < dim; ++p) out.names.push_back("theta[" + std::to_string(p) + "]");
  const int threads = config.threads > 0 ? config.threads : config.chains;
  parallel_for(static_cast<std::size_t>(config.chains), threads, [&](std::size_t c) {
    out.chains[c] = run_chain(f, dim, config, static_cast<int>(c), init);
  });
  return out;
}

PosteriorRun run(const Model& model, const SamplerConfig& config) {
  const long failures_before = model.failures();
  auto f = [&model](const Vector& theta, Vector& grad) {
    return model.log_posterior_grad(theta, grad);
  };
  PosteriorRun out = run_sampler(f, model.dimension(), config);
  out.names = model.parameter_names();
  out.model_name = model.spec().name();
  out.failed_evaluations = model.failures() - failures_before;
  return out;
}

double rhat(const std::vector<std::span<const double>>& chains) {
  check_chains(chains, 2);
  if (chains.size() < 2) throw ValidationError("rhat needs at least two chains");
  const auto m = static_cast<double>(chains.size());
  const auto n = static_cast<double>(chains.front().size());
  std::vector<double> means;
  double w = 0.0;
  for (const auto& c : chains) {
    const double mu = mean_of(c);
    means.push_back(mu);
    double s = 0.0;
    for (double v : c) s += (v - mu) * (v - mu);
    w += s / (n - 1.0);
  }
  w /= m;
  const double grand = mean_of(means);
  double b_over_n = 0.0;
  for (double mu : means) b_over_n += (mu - grand) * (mu - grand);
  b_over_n /= (m - 1.0);
  if (b_over_n == 0.0) return 1.0;
  if (w == 0.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(1.0 + b_over_n / w);
}

double split_rhat(const std::vector<std::span<const double>>& chains) {
  check_chains(chains, 4);
  std::vector<std::span<const double>> halves;
  const std::size_t half = chains.front().size() / 2;
  for (const auto& c : chains) {
    halves.push_back(c.subspan(0, half));
    halves.push_back(c.subspan(c.size() - half, half));
  }
  return rhat(halves);
}

EssEstimate ess_geyer(std::span<const double> chain) {
  if (chain.size() < 4) throw ValidationError("ess_geyer needs at least 4 draws");
  const double mu = mean_of(chain);
  const double c0 = autocov(chain, mu, 0);
  if (!(c0 > 0.0)) return {0.0, true};
  const double tau =
      geyer_tau([&](std::size_t t) { return autocov(chain, mu, t) / c0; }, chain.size());
  const auto n = static_cast<double>(chain.size());
  return {n / std::max(tau, 1.0 / std::log10(n)), false};
}

EssEstimate ess_multichain(const std::vector<std::span<const double>>& chains) {
  check_chains(chains, 4);
  if (chains.size() == 1) return ess_geyer(chains.front());
  const auto m = static_cast<double>(chains.size());
  const std::size_t len = chains.front().size();
  const auto n = static_cast<double>(len);
  std::vector<double> means;
  for (const auto& c : chains) means.push_back(mean_of(c));
  double w = 0.0;
  for (std::size_t c = 0; c < chains.size(); ++c) w += autocov(chains[c], means[c], 0) * n / (n - 1.0);
  w /= m;
  const double grand = mean_of(means);
  double b_over_n = 0.0;
  for (double mu : means) b_over_n += (mu - grand) * (mu - grand);
  b_over_n /= (m - 1.0);
  const double var_plus = w * (n - 1.0) / n + b_over_n;
  if (!(var_plus > 0.0)) return {0.0, true};
  auto rho = [&](std::size_t t) {
    if (t == 0) return 1.0;
    double acov = 0.0;
    for (std::size_t c = 0; c < chains.size(); ++c) acov += autocov(chains[c], means[c], t);
    acov /= m;
    return 1.0 - (w - acov) / var_plus;
  };
  const double tau = geyer_tau(rho, len);
  const double total = m * n;
  return {total / std::max(tau, 1.0 / std::log10(total)), false};
}

// ---------------------------------------------------------------------------
// Draw store

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + path.string());
  os << text;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_draws(const PosteriorRun& run, const std::string& dir) {
  static_assert(std::endian::native == std::endian::little, "draw store assumes little-endian");
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const int n = run.draws_per_chain();
  const int dim = run.dimension();
  {
    std::ofstream os(fs::path(dir) / "draws.bin", std::ios::binary);
    if (!os) throw ValidationError("cannot write draw store in " + dir);
    std::vector<double> row(static_cast<std::size_t>(dim) + 1);
    for (const auto& c : run.chains)
      for (int i = 0; i < n; ++i) {
        row[0] = c.log_density(i);
        for (int p = 0; p < dim; ++p) row[static_cast<std::size_t>(p) + 1] = c.draws(i, p);
        os.write(reinterpret_cast<const char*>(row.data()),
                 static_cast<std::streamsize>(row.size() * sizeof(double)));
      }
  }
  nlohmann::ordered_json h;
  h["format"] = "float64-le row-major";
  h["model"] = run.model_name;
  h["spec_hash"] = run.spec_hash;
  h["seed"] = run.config.seed;
  h["chains"] = run.chains.size();
  h["draws_per_chain"] = n;
  h["iterations"] = run.config.iterations;
  h["warmup"] = run.config.warmup;
  std::vector<std::string> columns{"lp__"};
  columns.insert(columns.end(), run.names.begin(), run.names.end());
  h["columns"] = columns;
  nlohmann::ordered_json adapt = nlohmann::ordered_json::array();
  for (const auto& c : run.chains) {
    nlohmann::ordered_json a;
    a["step_size"] = c.step_size;
    a["inv_mass"] = std::vector<double>(c.inv_mass.data(), c.inv_mass.data() + c.inv_mass.size());
    a["divergences"] = c.divergences;
    a["warmup_divergences"] = c.warmup_divergences;
    adapt.push_back(a);
  }
  h["adaptation"] = adapt;
  write_text(fs::path(dir) / "draws.json", h.dump(2) + "\n");

  std::string csv = "chain,iteration";
  for (const auto& c : columns) csv += "," + c;
  csv += "\n";
  for (std::size_t c = 0; c < run.chains.size(); ++c)
    for (int i = 0; i < n; ++i) {
      csv += std::to_string(c) + "," + std::to_string(i) + "," + fmt(run.chains[c].log_density(i));
      for (int p = 0; p < dim; ++p) csv += "," + fmt(run.chains[c].draws(i, p));
      csv += "\n";
    }
  write_text(fs::path(dir) / "draws.csv", csv);
}

PosteriorRun read_draws(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream hs(fs::path(dir) / "draws.json");
  if (!hs) throw ValidationError("missing draw header in " + dir);
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed draw header: ") + e.what());
  }
  PosteriorRun run;
  run.model_name = h.at("model").get<std::string>();
  run.spec_hash = h.value("spec_hash", "");
  run.config.seed = h.at("seed").get<std::uint64_t>();
  run.config.chains = h.at("chains").get<int>();
  run.config.iterations = h.at("iterations").get<int>();
  run.config.warmup = h.at("warmup").get<int>();
  auto columns = h.at("columns").get<std::vector<std::string>>();
  if (columns.empty() || columns.front() != "lp__") throw ValidationError("bad draw columns");
  run.names.assign(columns.begin() + 1, columns.end());
  const int n = h.at("draws_per_chain").get<int>();
  const int dim = static_cast<int>(run.names.size());
  std::ifstream bs(fs::path(dir) / "draws.bin", std::ios::binary);
  if (!bs) throw ValidationError("missing draw store in " + dir);
  std::vector<double> row(static_cast<std::size_t>(dim) + 1);
  const auto& adapt = h.at("adaptation");
  for (int c = 0; c < run.config.chains; ++c) {
    ChainResult cr;
    cr.draws.resize(n, dim);
    cr.log_density.resize(n);
    for (int i = 0; i < n; ++i) {
      bs.read(reinterpret_cast<char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(double)));
      if (!bs) throw ValidationError("truncated draw store in " + dir);
      cr.log_density(i) = row[0];
      for (int p = 0; p < dim; ++p) cr.draws(i, p) = row[static_cast<std::size_t>(p) + 1];
    }
    const auto& a = adapt.at(static_cast<std::size_t>(c));
    cr.step_size = a.at("step_size").get<double>();
    const auto im = a.at("inv_mass").get<std::vector<double>>();
    cr.inv_mass = Eigen::Map<const Vector>(im.data(), static_cast<Eigen::Index>(im.size()));
    cr.divergences = a.at("divergences").get<int>();
    cr.warmup_divergences = a.at("warmup_divergences").get<int>();
    run.chains.push_back(std::move(cr));
  }
  return run;
}

void write_summary_csv(const PosteriorRun& run, const std::string& path) {
  std::string csv = "parameter,mean,sd,q05,q50,q95,rhat,split_rhat,ess,degenerate\n";
  for (const auto& s : run.summary())
    csv += s.name + "," + fmt(s.mean) + "," + fmt(s.sd) + "," + fmt(s.q05) + "," + fmt(s.q50) +
           "," + fmt(s.q95) + "," + fmt(s.rhat) + "," + fmt(s.split_rhat) + "," + fmt(s.ess) +
           "," + (s.degenerate ? "1" : "0") + "\n";
  write_text(path, csv);
}

}  // namespace jsdm
