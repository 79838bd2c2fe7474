#include "jsdm/io.hpp"

#include "jsdm/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace jsdm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// RFC 4180 style: quotes allowed around fields, "" escapes a quote
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::string where(const std::string& file, int line) {
  return file + ":" + std::to_string(line);
}

double parse_double(const std::string& s, const std::string& file, int line) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end || !std::isfinite(v))
    throw ValidationError(where(file, line) + ": '" + s + "' is not a finite number");
  return v;
}

long parse_int(const std::string& s, const std::string& file, int line) {
  long v = 0;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end)
    throw ValidationError(where(file, line) + ": '" + s + "' is not an integer");
  return v;
}

template <typename Map>
int lookup(const Map& m, const std::string& key, const std::string& what, const std::string& file,
           int line) {
  const auto it = m.find(key);
  if (it == m.end())
    throw ValidationError(where(file, line) + ": unknown " + what + " '" + key + "'");
  return it->second;
}

}  // namespace

int CsvTable::column(const std::string& name, const std::string& file) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ValidationError(file + ": missing column '" + name + "'");
  return static_cast<int>(it - header.begin());
}

CsvTable read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open '" + path + "'");
  CsvTable t;
  std::string line;
  int no = 0;
  while (std::getline(is, line)) {
    ++no;
    if (no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw ValidationError(where(path, no) + ": expected " + std::to_string(t.header.size()) +
                            " fields, found " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.line.push_back(no);
  }
  if (t.header.empty()) throw ValidationError("'" + path + "' is empty");
  return t;
}

long round_half_even(double x) { return std::lrint(std::nearbyint(x)); }

Dataset load_dataset(const DatasetPaths& paths, LoadReport* report) {
  LoadReport local;
  LoadReport& rep = report ? *report : local;
  Dataset d;

  // groups
  const auto gt = read_csv(paths.groups);
  std::unordered_map<std::string, int> group_index;
  std::vector<int> group_n;
  {
    const int cg = gt.column("group", paths.groups), cn = gt.column("N", paths.groups);
    for (std::size_t r = 0; r < gt.rows.size(); ++r) {
      const auto& name = gt.rows[r][static_cast<std::size_t>(cg)];
      const long n = parse_int(gt.rows[r][static_cast<std::size_t>(cn)], paths.groups, gt.line[r]);
      if (n < 1) throw ValidationError(where(paths.groups, gt.line[r]) + ": N must be >= 1");
      if (!group_index.emplace(name, static_cast<int>(d.group_names.size())).second)
        throw ValidationError(where(paths.groups, gt.line[r]) + ": duplicate group '" + name + "'");
      d.group_names.push_back(name);
      group_n.push_back(static_cast<int>(n));
    }
  }
  d.groups.members.resize(d.group_names.size());

  // species
  const auto st = read_csv(paths.species);
  std::unordered_map<std::string, int> species_index;
  {
    const int cs = st.column("species", paths.species), cg = st.column("group", paths.species);
    for (std::size_t r = 0; r < st.rows.size(); ++r) {
      const auto& name = st.rows[r][static_cast<std::size_t>(cs)];
      const int g = lookup(group_index, st.rows[r][static_cast<std::size_t>(cg)], "group",
                           paths.species, st.line[r]);
      const int j = static_cast<int>(d.species_names.size());
      if (!species_index.emplace(name, j).second)
        throw ValidationError(where(paths.species, st.line[r]) + ": duplicate species '" + name + "'");
      d.species_names.push_back(name);
      d.groups.members[static_cast<std::size_t>(g)].push_back(j);
    }
  }
  for (std::size_t g = 0; g < d.group_names.size(); ++g)
    if (d.groups.members[g].empty())
      throw ValidationError(paths.groups + ": group '" + d.group_names[g] + "' has no species");

  // plots
  const auto pt = read_csv(paths.plots);
  std::unordered_map<std::string, int> plot_index;
  {
    const int cp = pt.column("plot", paths.plots), cx = pt.column("x", paths.plots),
              cy = pt.column("y", paths.plots);
    for (std::size_t r = 0; r < pt.rows.size(); ++r) {
      const auto& id = pt.rows[r][static_cast<std::size_t>(cp)];
      if (!plot_index.emplace(id, static_cast<int>(d.plot_ids.size())).second)
        throw ValidationError(where(paths.plots, pt.line[r]) + ": duplicate plot '" + id + "'");
      d.plot_ids.push_back(id);
      d.locations.push_back({parse_double(pt.rows[r][static_cast<std::size_t>(cx)], paths.plots, pt.line[r]),
                             parse_double(pt.rows[r][static_cast<std::size_t>(cy)], paths.plots, pt.line[r])});
    }
  }
  const int n = d.plots();
  const int groups = static_cast<int>(d.group_names.size());
  d.groups.resolution.resize(n, groups);
  for (int g = 0; g < groups; ++g) d.groups.resolution.col(g).setConstant(group_n[static_cast<std::size_t>(g)]);

  if (!paths.resolution.empty()) {
    const auto rt = read_csv(paths.resolution);
    const int cp = rt.column("plot", paths.resolution), cg = rt.column("group", paths.resolution),
              cn = rt.column("N", paths.resolution);
    for (std::size_t r = 0; r < rt.rows.size(); ++r) {
      const int i = lookup(plot_index, rt.rows[r][static_cast<std::size_t>(cp)], "plot", paths.resolution, rt.line[r]);
      const int g = lookup(group_index, rt.rows[r][static_cast<std::size_t>(cg)], "group", paths.resolution, rt.line[r]);
      const long v = parse_int(rt.rows[r][static_cast<std::size_t>(cn)], paths.resolution, rt.line[r]);
      if (v < 1) throw ValidationError(where(paths.resolution, rt.line[r]) + ": N must be >= 1");
      d.groups.resolution(i, g) = static_cast<int>(v);
    }
  }

  // counts
  const auto ct = read_csv(paths.counts);
  d.counts = Eigen::MatrixXi::Zero(n, d.species());
  const auto gof = d.groups.group_of_species();
  {
    const int cp = ct.column("plot", paths.counts), cs = ct.column("species", paths.counts);
    const bool percent =
        std::find(ct.header.begin(), ct.header.end(), "percent") != ct.header.end();
    const int cv = ct.column(percent ? "percent" : "count", paths.counts);
    std::vector<char> seen(static_cast<std::size_t>(n * d.species()), 0);
    for (std::size_t r = 0; r < ct.rows.size(); ++r) {
      const int line = ct.line[r];
      const int i = lookup(plot_index, ct.rows[r][static_cast<std::size_t>(cp)], "plot", paths.counts, line);
      const int j = lookup(species_index, ct.rows[r][static_cast<std::size_t>(cs)], "species", paths.counts, line);
      auto& flag = seen[static_cast<std::size_t>(i * d.species() + j)];
      if (flag) throw ValidationError(where(paths.counts, line) + ": duplicate plot/species entry");
      flag = 1;
      const auto& cell = ct.rows[r][static_cast<std::size_t>(cv)];
      long y = 0;
      if (percent) {
        const double p = parse_double(cell, paths.counts, line);
        if (p < 0.0 || p > 100.0)
          throw ValidationError(where(paths.counts, line) + ": percent cover must be in [0, 100]");
        const double x = p * d.groups.resolution(i, gof[static_cast<std::size_t>(j)]) / 100.0;
        y = round_half_even(x);
        ++rep.converted;
        if (std::abs(x - static_cast<double>(y)) > kPercentTolerance) {
          std::ostringstream msg;
          msg << where(paths.counts, line) << ": " << p << "% is " << x
              << " counts, rounded to " << y;
          rep.warnings.push_back(msg.str());
        }
      } else {
        y = parse_int(cell, paths.counts, line);
      }
      if (y < 0) throw ValidationError(where(paths.counts, line) + ": negative count");
      d.counts(i, j) = static_cast<int>(y);
    }
  }
  d.validate();
  return d;
}

std::vector<int> default_resolution(const Dataset& data) {
  std::vector<int> out;
  for (int g = 0; g < data.groups.groups(); ++g) {
    std::map<int, int> freq;
    for (int i = 0; i < data.plots(); ++i) ++freq[data.groups.resolution(i, g)];
    int best = 1, count = -1;
    for (const auto& [v, c] : freq)
      if (c > count) {
        best = v;
        count = c;
      }
    out.push_back(best);
  }
  return out;
}

void write_dataset(const Dataset& data, const std::string& dir, const std::vector<int>& group_n) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream os(fs::path(dir) / name);
    if (!os) throw ValidationError("cannot write " + (fs::path(dir) / name).string());
    return os;
  };
  const auto gof = data.groups.group_of_species();
  {
    auto os = open("groups.csv");
    os << "group,N\n";
    for (std::size_t g = 0; g < data.group_names.size(); ++g)
      os << data.group_names[g] << ',' << group_n[g] << '\n';
  }
  {
    auto os = open("species.csv");
    os << "species,group\n";
    for (int j = 0; j < data.species(); ++j)
      os << data.species_names[static_cast<std::size_t>(j)] << ','
         << data.group_names[static_cast<std::size_t>(gof[static_cast<std::size_t>(j)])] << '\n';
  }
  {
    auto os = open("plots.csv");
    os << "plot,x,y\n";
    char buf[64];
    for (int i = 0; i < data.plots(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g", data.locations[static_cast<std::size_t>(i)].x,
                    data.locations[static_cast<std::size_t>(i)].y);
      os << data.plot_ids[static_cast<std::size_t>(i)] << ',' << buf << '\n';
    }
  }
  {
    auto os = open("counts.csv");
    os << "plot,species,count\n";
    for (int i = 0; i < data.plots(); ++i)
      for (int j = 0; j < data.species(); ++j)
        os << data.plot_ids[static_cast<std::size_t>(i)] << ','
           << data.species_names[static_cast<std::size_t>(j)] << ',' << data.counts(i, j) << '\n';
  }
  auto os = open("resolution.csv");
  os << "plot,group,N\n";
  for (int i = 0; i < data.plots(); ++i)
    for (int g = 0; g < data.groups.groups(); ++g)
      if (data.groups.resolution(i, g) != group_n[static_cast<std::size_t>(g)])
        os << data.plot_ids[static_cast<std::size_t>(i)] << ','
           << data.group_names[static_cast<std::size_t>(g)] << ',' << data.groups.resolution(i, g)
           << '\n';
}

}  // namespace jsdm
