#include "jsdm/config.hpp"

#include "jsdm/errors.hpp"

#include <filesystem>
#include <fstream>
#include <set>

namespace jsdm {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError("config: '" + where + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key)) throw ValidationError("config: unknown key '" + where + "." + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config: '" + where + "." + key + "' has the wrong type");
  }
}

Location read_point(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw ValidationError("config: '" + where + "' must be [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

std::vector<Location> read_ring(const json& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError("config: '" + where + "' must be a list of points");
  std::vector<Location> out;
  for (const auto& p : j) out.push_back(read_point(p, where));
  return out;
}

ojson point(const Location& p) { return ojson::array({p.x, p.y}); }

ojson ring(const std::vector<Location>& v) {
  ojson a = ojson::array();
  for (const auto& p : v) a.push_back(point(p));
  return a;
}

Region parse_region(const json& j) {
  check_keys(j, {"type", "min", "max", "vertices", "center", "radius", "holes"}, "mesh.region");
  std::string type;
  read(j, "type", type, "mesh.region");
  Region r;
  if (type == "rectangle") {
    if (!j.contains("min") || !j.contains("max"))
      throw ValidationError("config: rectangle region needs 'min' and 'max'");
    const auto lo = read_point(j["min"], "mesh.region.min");
    const auto hi = read_point(j["max"], "mesh.region.max");
    r = Region::rectangle(lo.x, lo.y, hi.x, hi.y);
  } else if (type == "polygon") {
    if (!j.contains("vertices")) throw ValidationError("config: polygon region needs 'vertices'");
    r = Region::polygon(read_ring(j["vertices"], "mesh.region.vertices"));
  } else if (type == "disc") {
    if (!j.contains("center") || !j.contains("radius"))
      throw ValidationError("config: disc region needs 'center' and 'radius'");
    double radius = 0.0;
    read(j, "radius", radius, "mesh.region");
    r = Region::disc(read_point(j["center"], "mesh.region.center"), radius);
  } else {
    throw ValidationError("config: mesh.region.type must be rectangle, polygon or disc");
  }
  if (j.contains("holes")) {
    if (!j["holes"].is_array()) throw ValidationError("config: mesh.region.holes must be a list");
    for (const auto& h : j["holes"]) r.holes.push_back(read_ring(h, "mesh.region.holes"));
  }
  r.validate();
  return r;
}

ScalarPrior parse_prior(const json& j, ScalarPrior p, const std::string& where) {
  check_keys(j, {"family", "location", "scale", "dof"}, where);
  if (j.contains("family")) {
    std::string f;
    read(j, "family", f, where);
    p.family = prior_family_from_string(f);
  }
  read(j, "location", p.location, where);
  read(j, "scale", p.scale, where);
  read(j, "dof", p.dof, where);
  return p;
}

ojson prior_json(const ScalarPrior& p) {
  return {{"family", to_string(p.family)}, {"location", p.location}, {"scale", p.scale}, {"dof", p.dof}};
}

}  // namespace

ojson to_json(const Region& r) {
  ojson j;
  switch (r.kind) {
    case Region::Kind::Rectangle: {
      const auto b = r.bounds();
      j["type"] = "rectangle";
      j["min"] = ojson::array({b[0], b[1]});
      j["max"] = ojson::array({b[2], b[3]});
      break;
    }
    case Region::Kind::Polygon:
      j["type"] = "polygon";
      j["vertices"] = ring(r.vertices);
      break;
    case Region::Kind::Disc:
      j["type"] = "disc";
      j["center"] = point(r.center);
      j["radius"] = r.radius;
      break;
  }
  ojson holes = ojson::array();
  for (const auto& h : r.holes) holes.push_back(ring(h));
  j["holes"] = holes;
  return j;
}

ojson to_json(const ModelSpec& spec) {
  ojson j;
  j["name"] = spec.name();
  j["kernel_of_component"] = spec.kernel_of_component;
  j["rel_jitter"] = spec.rel_jitter;
  const auto& p = spec.priors;
  j["priors"] = {{"length_scale", prior_json(p.length_scale)},
                 {"lengthscale_mean", prior_json(p.lengthscale_mean)},
                 {"field_length_scale", prior_json(p.field_length_scale)},
                 {"field_variance", prior_json(p.field_variance)},
                 {"concentration", prior_json(p.concentration)},
                 {"intercept", prior_json(p.intercept)},
                 {"coreg_sd", prior_json(p.coreg_sd)},
                 {"lkj_shape", p.lkj_shape}};
  return j;
}

RunConfig parse_config(const json& j, const std::string& base_dir) {
  check_keys(j, {"seed", "data", "model", "sampler", "cv", "mesh", "simulate", "output"}, "config");
  RunConfig c;
  c.base_dir = base_dir;
  read(j, "seed", c.seed, "config");

  if (j.contains("data")) {
    const auto& d = j["data"];
    check_keys(d, {"plots", "species", "groups", "counts", "resolution"}, "data");
    read(d, "plots", c.data.plots, "data");
    read(d, "species", c.data.species, "data");
    read(d, "groups", c.data.groups, "data");
    read(d, "counts", c.data.counts, "data");
    read(d, "resolution", c.data.resolution, "data");
  }

  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, {"name", "kernel_of_component", "rel_jitter", "priors"}, "model");
    if (m.contains("name")) {
      std::string name;
      read(m, "name", name, "model");
      c.model = ModelSpec::from_name(name);
    }
    read(m, "kernel_of_component", c.model.kernel_of_component, "model");
    read(m, "rel_jitter", c.model.rel_jitter, "model");
    if (m.contains("priors")) {
      const auto& p = m["priors"];
      check_keys(p, {"length_scale", "lengthscale_mean", "field_length_scale", "field_variance",
                     "concentration", "intercept", "coreg_sd", "lkj_shape"},
                 "model.priors");
      auto& pr = c.model.priors;
      auto one = [&](const char* key, ScalarPrior& target) {
        if (p.contains(key)) target = parse_prior(p[key], target, std::string("model.priors.") + key);
      };
      one("length_scale", pr.length_scale);
      one("lengthscale_mean", pr.lengthscale_mean);
      one("field_length_scale", pr.field_length_scale);
      one("field_variance", pr.field_variance);
      one("concentration", pr.concentration);
      one("intercept", pr.intercept);
      one("coreg_sd", pr.coreg_sd);
      read(p, "lkj_shape", pr.lkj_shape, "model.priors");
    }
  }

  if (j.contains("sampler")) {
    const auto& s = j["sampler"];
    check_keys(s, {"chains", "iterations", "warmup", "target_accept", "integration_time",
                   "max_leapfrog", "init_radius"},
               "sampler");
    auto& o = c.sampler;
    read(s, "chains", o.chains, "sampler");
    read(s, "iterations", o.iterations, "sampler");
    read(s, "warmup", o.warmup, "sampler");
    read(s, "target_accept", o.target_accept, "sampler");
    read(s, "integration_time", o.integration_time, "sampler");
    read(s, "max_leapfrog", o.max_leapfrog, "sampler");
    read(s, "init_radius", o.init_radius, "sampler");
  }

  if (j.contains("cv")) {
    const auto& v = j["cv"];
    check_keys(v, {"folds", "seed", "max_draws", "bootstrap", "min_ess", "pit_inner", "pit_bins"}, "cv");
    read(v, "folds", c.cv.folds, "cv");
    if (v.contains("seed") && !v["seed"].is_null()) {
      std::uint64_t s = 0;
      read(v, "seed", s, "cv");
      c.cv.seed = s;
    }
    read(v, "max_draws", c.cv.max_draws, "cv");
    read(v, "bootstrap", c.cv.bootstrap, "cv");
    read(v, "min_ess", c.cv.min_ess, "cv");
    read(v, "pit_inner", c.cv.pit_inner, "cv");
    read(v, "pit_bins", c.cv.pit_bins, "cv");
  }

  if (j.contains("mesh")) {
    const auto& m = j["mesh"];
    check_keys(m, {"region", "cell_area", "max_draws", "trials", "mode", "level"}, "mesh");
    if (m.contains("region") && !m["region"].is_null()) c.mesh.region = parse_region(m["region"]);
    read(m, "cell_area", c.mesh.cell_area, "mesh");
    read(m, "max_draws", c.mesh.max_draws, "mesh");
    read(m, "trials", c.mesh.trials, "mesh");
    read(m, "level", c.mesh.level, "mesh");
    if (m.contains("mode")) {
      std::string mode;
      read(m, "mode", mode, "mesh");
      if (mode == "joint")
        c.mesh.mode = ConditionalMode::Joint;
      else if (mode == "pointwise")
        c.mesh.mode = ConditionalMode::Pointwise;
      else
        throw ValidationError("config: mesh.mode must be 'joint' or 'pointwise'");
    }
  }

  if (j.contains("simulate")) {
    const auto& s = j["simulate"];
    check_keys(s, {"plots", "extent", "layout", "groups", "theta"}, "simulate");
    read(s, "plots", c.simulate.plots, "simulate");
    read(s, "extent", c.simulate.extent, "simulate");
    read(s, "layout", c.simulate.layout, "simulate");
    if (s.contains("groups")) {
      if (!s["groups"].is_array()) throw ValidationError("config: simulate.groups must be a list");
      for (const auto& g : s["groups"]) {
        check_keys(g, {"name", "N", "species"}, "simulate.groups[]");
        SimulateGroup sg;
        read(g, "name", sg.name, "simulate.groups[]");
        read(g, "N", sg.n, "simulate.groups[]");
        read(g, "species", sg.species, "simulate.groups[]");
        c.simulate.groups.push_back(std::move(sg));
      }
    }
    if (s.contains("theta") && !s["theta"].is_null()) {
      std::vector<double> theta;
      read(s, "theta", theta, "simulate");
      c.simulate.theta = std::move(theta);
    }
  }

  if (j.contains("output")) {
    const auto& o = j["output"];
    check_keys(o, {"dir"}, "output");
    read(o, "dir", c.output_dir, "output");
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ValidationError("config '" + path + "': " + e.what());
  }
  const auto base = std::filesystem::absolute(path).parent_path().string();
  return parse_config(j, base);
}

ojson to_json(const RunConfig& c) {
  ojson j;
  j["seed"] = c.seed;
  j["data"] = {{"plots", c.data.plots},
               {"species", c.data.species},
               {"groups", c.data.groups},
               {"counts", c.data.counts},
               {"resolution", c.data.resolution}};
  j["model"] = to_json(c.model);
  const auto& s = c.sampler;
  j["sampler"] = {{"chains", s.chains},
                  {"iterations", s.iterations},
                  {"warmup", s.warmup},
                  {"target_accept", s.target_accept},
                  {"integration_time", s.integration_time},
                  {"max_leapfrog", s.max_leapfrog},
                  {"init_radius", s.init_radius}};
  j["cv"] = {{"folds", c.cv.folds},
             {"seed", c.cv.seed ? ojson(*c.cv.seed) : ojson(nullptr)},
             {"max_draws", c.cv.max_draws},
             {"bootstrap", c.cv.bootstrap},
             {"min_ess", c.cv.min_ess},
             {"pit_inner", c.cv.pit_inner},
             {"pit_bins", c.cv.pit_bins}};
  j["mesh"] = {{"region", c.mesh.region ? to_json(*c.mesh.region) : ojson(nullptr)},
               {"cell_area", c.mesh.cell_area},
               {"max_draws", c.mesh.max_draws},
               {"trials", c.mesh.trials},
               {"mode", c.mesh.mode == ConditionalMode::Joint ? "joint" : "pointwise"},
               {"level", c.mesh.level}};
  ojson groups = ojson::array();
  for (const auto& g : c.simulate.groups)
    groups.push_back({{"name", g.name}, {"N", g.n}, {"species", g.species}});
  j["simulate"] = {{"plots", c.simulate.plots},
                   {"extent", c.simulate.extent},
                   {"layout", c.simulate.layout},
                   {"groups", groups},
                   {"theta", c.simulate.theta ? ojson(*c.simulate.theta) : ojson(nullptr)}};
  j["output"] = {{"dir", c.output_dir}};
  return j;
}

DatasetPaths RunConfig::resolved_data() const {
  namespace fs = std::filesystem;
  auto resolve = [&](const std::string& p) -> std::string {
    if (p.empty()) return p;
    const fs::path path(p);
    return path.is_absolute() ? p : (fs::path(base_dir) / path).string();
  };
  return {resolve(data.plots), resolve(data.species), resolve(data.groups), resolve(data.counts),
          resolve(data.resolution)};
}

void RunConfig::validate() const {
  model.priors.validate();
  if (!(model.rel_jitter > 0.0)) throw ValidationError("config: model.rel_jitter must be positive");
  sampler.validate();
  if (cv.folds < 2) throw ValidationError("config: cv.folds must be >= 2");
  if (cv.max_draws < 1) throw ValidationError("config: cv.max_draws must be >= 1");
  if (cv.bootstrap < 0) throw ValidationError("config: cv.bootstrap must be >= 0");
  if (cv.pit_inner < 1) throw ValidationError("config: cv.pit_inner must be >= 1");
  if (cv.pit_bins < 1) throw ValidationError("config: cv.pit_bins must be >= 1");
  if (!(mesh.cell_area > 0.0)) throw ValidationError("config: mesh.cell_area must be positive");
  if (mesh.max_draws < 1) throw ValidationError("config: mesh.max_draws must be >= 1");
  if (mesh.trials < 0) throw ValidationError("config: mesh.trials must be >= 0");
  if (!(mesh.level > 0.0 && mesh.level < 1.0)) throw ValidationError("config: mesh.level must be in (0, 1)");
  if (simulate.plots < 1) throw ValidationError("config: simulate.plots must be >= 1");
  if (!(simulate.extent > 0.0)) throw ValidationError("config: simulate.extent must be positive");
  if (simulate.layout != "uniform" && simulate.layout != "grid")
    throw ValidationError("config: simulate.layout must be 'uniform' or 'grid'");
  for (const auto& g : simulate.groups) {
    if (g.n < 1) throw ValidationError("config: simulate group '" + g.name + "' needs N >= 1");
    if (g.species.empty()) throw ValidationError("config: simulate group '" + g.name + "' has no species");
  }
  if (output_dir.empty()) throw ValidationError("config: output.dir must not be empty");
}

std::string config_schema() {
  // hand-maintained; mirrors parse_config
  static const char* kSchema = R"({
  "$schema": "http://json-schema.org/draft-07/schema#",
  "title": "jsdm run configuration",
  "type": "object",
  "additionalProperties": false,
  "definitions": {
    "point": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    "ring": {"type": "array", "items": {"$ref": "#/definitions/point"}, "minItems": 3},
    "prior": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "family": {"enum": ["normal", "student_t", "half_student_t", "inverse_half_student_t", "gamma"]},
        "location": {"type": "number"}, "scale": {"type": "number"}, "dof": {"type": "number"}
      }
    }
  },
  "properties": {
    "seed": {"type": "integer", "minimum": 0},
    "data": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "plots": {"type": "string"}, "species": {"type": "string"}, "groups": {"type": "string"},
        "counts": {"type": "string"}, "resolution": {"type": "string"}
      }
    },
    "model": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "name": {"type": "string"},
        "kernel_of_component": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "rel_jitter": {"type": "number", "exclusiveMinimum": 0},
        "priors": {
          "type": "object", "additionalProperties": false,
          "properties": {
            "length_scale": {"$ref": "#/definitions/prior"},
            "lengthscale_mean": {"$ref": "#/definitions/prior"},
            "field_length_scale": {"$ref": "#/definitions/prior"},
            "field_variance": {"$ref": "#/definitions/prior"},
            "concentration": {"$ref": "#/definitions/prior"},
            "intercept": {"$ref": "#/definitions/prior"},
            "coreg_sd": {"$ref": "#/definitions/prior"},
            "lkj_shape": {"type": "number", "minimum": 1}
          }
        }
      }
    },
    "sampler": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "chains": {"type": "integer", "minimum": 1},
        "iterations": {"type": "integer", "minimum": 1},
        "warmup": {"type": "integer", "minimum": 0},
        "target_accept": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "integration_time": {"type": "number", "exclusiveMinimum": 0},
        "max_leapfrog": {"type": "integer", "minimum": 1},
        "init_radius": {"type": "number", "exclusiveMinimum": 0}
      }
    },
    "cv": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "folds": {"type": "integer", "minimum": 2},
        "seed": {"type": ["integer", "null"], "minimum": 0},
        "max_draws": {"type": "integer", "minimum": 1},
        "bootstrap": {"type": "integer", "minimum": 0},
        "min_ess": {"type": "number"},
        "pit_inner": {"type": "integer", "minimum": 1},
        "pit_bins": {"type": "integer", "minimum": 1}
      }
    },
    "mesh": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "region": {
          "type": ["object", "null"], "additionalProperties": false,
          "properties": {
            "type": {"enum": ["rectangle", "polygon", "disc"]},
            "min": {"$ref": "#/definitions/point"}, "max": {"$ref": "#/definitions/point"},
            "vertices": {"$ref": "#/definitions/ring"},
            "center": {"$ref": "#/definitions/point"}, "radius": {"type": "number"},
            "holes": {"type": "array", "items": {"$ref": "#/definitions/ring"}}
          },
          "required": ["type"]
        },
        "cell_area": {"type": "number", "exclusiveMinimum": 0},
        "max_draws": {"type": "integer", "minimum": 1},
        "trials": {"type": "integer", "minimum": 0},
        "mode": {"enum": ["joint", "pointwise"]},
        "level": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
      }
    },
    "simulate": {
      "type": "object", "additionalProperties": false,
      "properties": {
        "plots": {"type": "integer", "minimum": 1},
        "extent": {"type": "number", "exclusiveMinimum": 0},
        "layout": {"enum": ["uniform", "grid"]},
        "groups": {
          "type": "array",
          "items": {
            "type": "object", "additionalProperties": false,
            "properties": {
              "name": {"type": "string"}, "N": {"type": "integer", "minimum": 1},
              "species": {"type": "array", "items": {"type": "string"}, "minItems": 1}
            }
          }
        },
        "theta": {"type": ["array", "null"], "items": {"type": "number"}}
      }
    },
    "output": {
      "type": "object", "additionalProperties": false,
      "properties": {"dir": {"type": "string"}}
    }
  }
}
)";
  return kSchema;
}

}  // namespace jsdm
