#include "jsdm/commands.hpp"

#include "jsdm/errors.hpp"
#include "jsdm/io.hpp"
#include "jsdm/predict.hpp"
#include "jsdm/sampler.hpp"
#include "jsdm/simulate.hpp"
#include "jsdm/validation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace jsdm {

namespace fs = std::filesystem;

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

struct Context {
  RunConfig config;
  fs::path out;
  int threads = 1;
};

Context prepare(const CommandOptions& o) {
  if (o.config.empty()) throw ValidationError("--config is required");
  if (o.threads < 0) throw ValidationError("--threads must be >= 0");
  Context c;
  c.config = load_config(o.config);
  if (o.seed) c.config.seed = *o.seed;
  if (!o.model.empty()) {
    // keep priors, jitter and any component map from the config
    const auto named = ModelSpec::from_name(o.model);
    c.config.model.latent = named.latent;
    c.config.model.k_distinct = named.k_distinct;
    c.config.model.kernel = named.kernel;
    c.config.model.observation = named.observation;
  }
  c.config.sampler.seed = c.config.seed;
  c.threads = o.threads;
  c.config.sampler.threads = o.threads;
  c.out = o.out.empty() ? fs::path(c.config.base_dir) / c.config.output_dir : fs::path(o.out);
  fs::create_directories(c.out);
  return c;
}

void write_effective_config(const Context& c) {
  std::ofstream os(c.out / "config.json");
  if (!os) throw ValidationError("cannot write " + (c.out / "config.json").string());
  auto j = to_json(c.config);
  // data paths as used, so the copy is self-contained
  const auto p = c.config.resolved_data();
  j["data"] = {{"plots", p.plots}, {"species", p.species}, {"groups", p.groups},
               {"counts", p.counts}, {"resolution", p.resolution}};
  os << j.dump(2) << '\n';
}

Dataset load_data(const Context& c, std::ostream& log) {
  const auto p = c.config.resolved_data();
  if (p.plots.empty() || p.species.empty() || p.groups.empty() || p.counts.empty())
    throw ValidationError("config: data.plots, data.species, data.groups and data.counts are required");
  LoadReport rep;
  auto d = load_dataset(p, &rep);
  for (const auto& w : rep.warnings) log << "warning: " << w << '\n';
  log << "data: " << d.plots() << " plots, " << d.species() << " species, " << d.groups.groups()
      << " groups\n";
  return d;
}

std::string spec_hash(const ModelSpec& spec) { return fnv1a_hex(to_json(spec).dump()); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---- predictive cache shared by cv and pit ---------------------------------

constexpr char kCacheMagic[8] = {'J', 'S', 'D', 'M', 'C', 'V', '0', '1'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw ValidationError("predictive cache is truncated");
  return v;
}

std::string cache_key(const Context& c) {
  auto j = to_json(c.config);
  j.erase("output");
  j.erase("mesh");
  j.erase("simulate");
  j.erase("data");
  // data by content, so moving the files keeps the cache valid
  std::string bytes = j.dump();
  const auto p = c.config.resolved_data();
  for (const auto* path : {&p.plots, &p.species, &p.groups, &p.counts, &p.resolution}) {
    if (path->empty()) continue;
    std::ifstream is(*path, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    bytes += '\0' + ss.str();
  }
  return fnv1a_hex(bytes);
}

void write_cache(const fs::path& path, const std::string& key,
                 const std::vector<FoldPredictive>& folds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + path.string());
  os.write(kCacheMagic, sizeof kCacheMagic);
  put<std::uint64_t>(os, key.size());
  os.write(key.data(), static_cast<std::streamsize>(key.size()));
  put<std::uint64_t>(os, folds.size());
  for (const auto& fp : folds) {
    put<std::int64_t>(os, fp.fold);
    put<std::int64_t>(os, fp.chains);
    put<std::uint64_t>(os, fp.plots.size());
    for (int p : fp.plots) put<std::int64_t>(os, p);
    put<std::uint64_t>(os, fp.draws.size());
    for (const auto& d : fp.draws) {
      put<std::uint64_t>(os, static_cast<std::uint64_t>(d.f.rows()));
      put<std::uint64_t>(os, static_cast<std::uint64_t>(d.f.cols()));
      os.write(reinterpret_cast<const char*>(d.f.data()),
               static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(d.f.size())));
      put<std::uint64_t>(os, static_cast<std::uint64_t>(d.gamma.size()));
      os.write(reinterpret_cast<const char*>(d.gamma.data()),
               static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(d.gamma.size())));
    }
  }
}

bool read_cache(const fs::path& path, const std::string& key, const Dataset& data,
                const ModelSpec& spec, std::vector<FoldPredictive>& folds) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return false;
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kCacheMagic, sizeof magic) != 0) return false;
  const auto klen = get<std::uint64_t>(is);
  if (klen > 1024) return false;
  std::string k(klen, '\0');
  is.read(k.data(), static_cast<std::streamsize>(klen));
  if (k != key) return false;
  const auto count = get<std::uint64_t>(is);
  folds.clear();
  for (std::uint64_t f = 0; f < count; ++f) {
    FoldPredictive fp;
    fp.fold = static_cast<int>(get<std::int64_t>(is));
    fp.chains = static_cast<int>(get<std::int64_t>(is));
    const auto np = get<std::uint64_t>(is);
    for (std::uint64_t i = 0; i < np; ++i) fp.plots.push_back(static_cast<int>(get<std::int64_t>(is)));
    fp.heldout = data.subset(fp.plots);
    fp.obs_groups = spec.observation == ObservationKind::BetaBinomial ? fp.heldout.groups.singletons()
                                                                      : fp.heldout.groups;
    const auto nd = get<std::uint64_t>(is);
    fp.draws.resize(nd);
    for (auto& d : fp.draws) {
      const auto r = get<std::uint64_t>(is);
      const auto cc = get<std::uint64_t>(is);
      d.f.resize(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(cc));
      is.read(reinterpret_cast<char*>(d.f.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(d.f.size())));
      const auto g = get<std::uint64_t>(is);
      d.gamma.resize(static_cast<Eigen::Index>(g));
      is.read(reinterpret_cast<char*>(d.gamma.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(d.gamma.size())));
      if (!is) throw ValidationError("predictive cache is truncated");
    }
    folds.push_back(std::move(fp));
  }
  return true;
}

std::vector<FoldPredictive> cv_predictives(const Context& c, const Dataset& data, std::ostream& log) {
  const fs::path cache = c.out / "cv" / "predictive.bin";
  const auto key = cache_key(c);
  std::vector<FoldPredictive> folds;
  if (read_cache(cache, key, data, c.config.model, folds)) {
    log << "cv: reusing fold predictions from " << cache.string() << '\n';
    return folds;
  }
  const std::uint64_t fold_seed = c.config.cv.seed.value_or(c.config.seed);
  if (c.config.cv.folds > data.plots())
    throw ValidationError("cv.folds exceeds the number of plots");
  const auto plan = kfold_split(data.plots(), c.config.cv.folds, fold_seed);
  CvRunOptions opt;
  opt.folds = c.config.cv.folds;
  opt.seed = c.config.seed;
  opt.max_draws = c.config.cv.max_draws;
  opt.threads = c.threads;
  log << "cv: fitting " << plan.folds << " folds of " << c.config.model.name() << '\n';
  folds = fold_predictives(c.config.model, data, plan, c.config.sampler, opt);
  fs::create_directories(c.out / "cv");
  {
    std::ofstream os(c.out / "cv" / "folds.csv");
    os << "plot,fold\n";
    for (int i = 0; i < data.plots(); ++i)
      os << data.plot_ids[static_cast<std::size_t>(i)] << ',' << plan.fold_of_plot[static_cast<std::size_t>(i)] << '\n';
  }
  write_cache(cache, key, folds);
  return folds;
}

}  // namespace

int cmd_fit(const CommandOptions& o, std::ostream& log) {
  auto c = prepare(o);
  write_effective_config(c);
  const auto data = load_data(c, log);
  const Model model(c.config.model, data);
  log << "fit: " << model.spec().name() << ", " << model.dimension() << " parameters, "
      << c.config.sampler.chains << " chains x " << c.config.sampler.iterations << " iterations\n";
  auto run_out = run(model, c.config.sampler);
  run_out.spec_hash = spec_hash(c.config.model);
  const fs::path dir = c.out / "fit";
  write_draws(run_out, dir.string());
  write_summary_csv(run_out, (dir / "summary.csv").string());

  const auto summary = run_out.summary();
  double max_rhat = 1.0, min_ess = INFINITY;
  for (const auto& s : summary) {
    if (std::isfinite(s.split_rhat)) max_rhat = std::max(max_rhat, s.split_rhat);
    if (!s.degenerate) min_ess = std::min(min_ess, s.ess);
  }
  nlohmann::ordered_json diag;
  diag["model"] = run_out.model_name;
  diag["spec_hash"] = run_out.spec_hash;
  diag["divergences"] = run_out.divergences();
  diag["mean_accept"] = run_out.mean_accept();
  diag["max_split_rhat"] = max_rhat;
  diag["min_ess"] = std::isfinite(min_ess) ? nlohmann::ordered_json(min_ess) : nlohmann::ordered_json(nullptr);
  diag["failed_evaluations"] = run_out.failed_evaluations;
  std::vector<std::string> warnings;
  if (run_out.divergences() > 0) warnings.push_back(std::to_string(run_out.divergences()) + " divergent transitions");
  if (max_rhat > 1.05) warnings.push_back("max split R-hat " + fmt(max_rhat) + " > 1.05");
  if (std::isfinite(min_ess) && min_ess < 100.0) warnings.push_back("min ESS " + fmt(min_ess) + " < 100");
  diag["warnings"] = warnings;
  std::ofstream(dir / "diagnostics.json") << diag.dump(2) << '\n';
  for (const auto& w : warnings) log << "warning: " << w << '\n';
  log << "fit: done, accept " << fmt(run_out.mean_accept()) << ", max split R-hat " << fmt(max_rhat)
      << '\n';
  return kExitOk;
}

int cmd_predict(const CommandOptions& o, std::ostream& log) {
  auto c = prepare(o);
  const auto data = load_data(c, log);
  const Model model(c.config.model, data);
  const fs::path fit_dir = c.out / "fit";
  if (!fs::exists(fit_dir / "draws.json"))
    throw ValidationError("predict: no draws in " + fit_dir.string() + " (run fit first)");
  const auto run_in = read_draws(fit_dir.string());
  if (run_in.model_name != model.spec().name() || run_in.dimension() != model.dimension())
    throw ValidationError("predict: stored draws belong to " + run_in.model_name + ", not " +
                          model.spec().name());
  Region region;
  if (c.config.mesh.region) {
    region = *c.config.mesh.region;
  } else {
    double x0 = INFINITY, y0 = INFINITY, x1 = -INFINITY, y1 = -INFINITY;
    for (const auto& p : data.locations) {
      x0 = std::min(x0, p.x);
      y0 = std::min(y0, p.y);
      x1 = std::max(x1, p.x);
      y1 = std::max(y1, p.y);
    }
    region = Region::rectangle(x0, y0, x1, y1);
  }
  const auto mesh = build_mesh(region, c.config.mesh.cell_area);
  PredictOptions opt;
  opt.max_draws = c.config.mesh.max_draws;
  opt.trials = c.config.mesh.trials;
  opt.seed = c.config.seed;
  opt.threads = c.threads;
  opt.mode = c.config.mesh.mode;
  log << "predict: " << mesh.active_cells().size() << " cells of " << fmt(mesh.cell_area())
      << " m^2, " << std::min<long>(opt.max_draws, run_in.pooled().rows()) << " draws\n";
  const auto cover = predict_cover(model, run_in.pooled(), mesh, opt);
  const auto totals = total_cover(cover, data.groups.members, data.group_names, c.config.mesh.level);
  write_prediction((c.out / "predict").string(), mesh, cover, totals);
  if (opt.trials > 0) {
    std::ofstream os(c.out / "predict" / "counts_mean.csv");
    os << "cell,x,y";
    for (const auto& s : cover.species) os << ',' << s;
    os << '\n';
    for (std::size_t i = 0; i < cover.sites.size(); ++i) {
      os << i << ',' << fmt(cover.sites[i].x) << ',' << fmt(cover.sites[i].y);
      for (std::size_t j = 0; j < cover.species.size(); ++j) {
        double s = 0.0;
        for (const auto& m : cover.counts) s += m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
        os << ',' << fmt(s / cover.draws());
      }
      os << '\n';
    }
  }
  const auto all = totals.names.size() - 1;
  log << "predict: total cover " << fmt(totals.mean(static_cast<Eigen::Index>(all))) << " ["
      << fmt(totals.lower(static_cast<Eigen::Index>(all))) << ", "
      << fmt(totals.upper(static_cast<Eigen::Index>(all))) << "]\n";
  return kExitOk;
}

int cmd_cv(const CommandOptions& o, std::ostream& log) {
  auto c = prepare(o);
  write_effective_config(c);
  const auto data = load_data(c, log);
  const auto folds = cv_predictives(c, data, log);
  CvOptions opt;
  opt.bootstrap = c.config.cv.bootstrap;
  opt.seed = c.config.seed;
  opt.min_ess = c.config.cv.min_ess;
  opt.threads = c.threads;
  auto rep = cv_scores(log_density_tables(folds), data.species_names, opt);
  rep.model = c.config.model.name();
  write_cv_report(rep, (c.out / "cv").string());
  for (const auto& w : rep.warnings) log << "warning: " << w << '\n';
  log << format_cv_table({rep});
  return kExitOk;
}

int cmd_pit(const CommandOptions& o, std::ostream& log) {
  auto c = prepare(o);
  const auto data = load_data(c, log);
  const auto folds = cv_predictives(c, data, log);
  PitOptions opt;
  opt.inner = c.config.cv.pit_inner;
  opt.seed = c.config.seed;
  opt.threads = c.threads;
  const auto values = pit_values(folds, opt);
  write_pit(values, (c.out / "pit").string(), c.config.cv.pit_bins);
  for (int v = 1; v <= 4; ++v) {
    const auto h = pit_histogram(values, v, c.config.cv.pit_bins);
    int n = 0;
    for (int x : h) n += x;
    log << "PIT" << v << ": " << n << " values\n";
  }
  return kExitOk;
}

int cmd_simulate(const CommandOptions& o, std::ostream& log) {
  auto c = prepare(o);
  write_effective_config(c);
  const auto layout = simulation_layout(c.config.simulate, c.config.seed);
  std::optional<Vector> theta;
  if (c.config.simulate.theta)
    theta = Eigen::Map<const Vector>(c.config.simulate.theta->data(),
                                     static_cast<Eigen::Index>(c.config.simulate.theta->size()));
  const auto sim = simulate_dataset(c.config.model, layout, theta, c.config.seed);
  const fs::path dir = c.out / "data";
  std::vector<int> group_n;
  for (const auto& g : c.config.simulate.groups) group_n.push_back(g.n);
  write_dataset(sim.data, dir.string(), group_n);
  write_truth(sim.truth, sim.data, (dir / "truth.json").string());
  log << "simulate: " << sim.data.plots() << " plots from " << sim.truth.model << " written to "
      << dir.string() << '\n';
  return kExitOk;
}

int cmd_report(const CommandOptions& o, std::ostream& log) {
  auto c = prepare(o);
  std::ostringstream md;
  md << "# Run report\n\n";
  md << "Model: `" << c.config.model.name() << "`, seed " << c.config.seed << "\n\n";
  const fs::path diag = c.out / "fit" / "diagnostics.json";
  if (fs::exists(diag)) {
    std::ifstream is(diag);
    const auto j = nlohmann::json::parse(is);
    md << "## Sampler diagnostics\n\n| quantity | value |\n|---|---|\n";
    for (const char* k : {"divergences", "mean_accept", "max_split_rhat", "min_ess", "failed_evaluations"})
      md << "| " << k << " | " << j[k].dump() << " |\n";
    md << '\n';
  }
  // every cv.json under the run directory, sorted for a stable table
  std::vector<fs::path> cv_files;
  for (const auto& e : fs::recursive_directory_iterator(c.out))
    if (e.is_regular_file() && e.path().filename() == "cv.json") cv_files.push_back(e.path());
  std::sort(cv_files.begin(), cv_files.end());
  if (!cv_files.empty()) {
    md << "## Cross-validation (estimate (se/me))\n\n| model | CV1 | CV2 | CV3 | CV4 |\n|---|---|---|---|---|\n";
    for (const auto& p : cv_files) {
      std::ifstream is(p);
      const auto j = nlohmann::json::parse(is);
      md << "| " << j.value("model", "?");
      for (const char* k : {"CV1", "CV2", "CV3", "CV4"}) {
        const auto& e = j[k];
        if (e["low_ess"].get<bool>() || e["estimate"].is_null()) {
          md << " | --";
          continue;
        }
        char cell[96];
        std::snprintf(cell, sizeof cell, " | %.4g (%.1e/%.1e)", e["estimate"].get<double>(),
                      e["se"].get<double>(), e["me"].get<double>());
        md << cell;
      }
      md << " |\n";
    }
    md << '\n';
  }
  const fs::path hist = c.out / "pit" / "pit_hist.csv";
  if (fs::exists(hist)) {
    const auto t = read_csv(hist.string());
    md << "## PIT histograms (counts per bin)\n\n";
    for (int v = 1; v <= 4; ++v) {
      md << "- PIT" << v << ":";
      for (const auto& row : t.rows)
        if (row[0] == std::to_string(v)) md << ' ' << row[4];
      md << '\n';
    }
    md << '\n';
  }
  const fs::path pred = c.out / "predict" / "summary.json";
  if (fs::exists(pred)) {
    std::ifstream is(pred);
    const auto j = nlohmann::json::parse(is);
    md << "## Total cover\n\n| quantity | mean | lower | upper |\n|---|---|---|---|\n";
    for (const auto& t : j["totals"])
      md << "| " << t["name"].get<std::string>() << " | " << fmt(t["mean"].get<double>()) << " | "
         << fmt(t["lower"].get<double>()) << " | " << fmt(t["upper"].get<double>()) << " |\n";
    md << '\n';
  }
  std::ofstream(c.out / "report.md") << md.str();
  log << "report: " << (c.out / "report.md").string() << '\n';
  return kExitOk;
}

int run_command(const std::string& name, const CommandOptions& options, std::ostream& log,
                std::ostream& err) {
  try {
    if (name == "fit") return cmd_fit(options, log);
    if (name == "predict") return cmd_predict(options, log);
    if (name == "cv") return cmd_cv(options, log);
    if (name == "pit") return cmd_pit(options, log);
    if (name == "simulate") return cmd_simulate(options, log);
    if (name == "report") return cmd_report(options, log);
    err << "error: unknown command '" << name << "'\n";
    return kExitValidation;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const DomainError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace jsdm
