#include "jsdm/dataset.hpp"

#include "jsdm/errors.hpp"

#include <cmath>
#include <sstream>

namespace jsdm {

void Dataset::validate() const {
  const int n = plots();
  const int j = species();
  if (n == 0) throw ValidationError("dataset has no plots");
  if (j == 0) throw ValidationError("dataset has no species");
  if (static_cast<int>(plot_ids.size()) != n)
    throw ValidationError("plot id table does not match the location table");
  if (counts.rows() != n || counts.cols() != j)
    throw ValidationError("count matrix must be plots x species");
  if (groups.resolution.rows() != n)
    throw ValidationError("resolution table must have one row per plot");
  if (static_cast<int>(group_names.size()) != groups.groups())
    throw ValidationError("group name table does not match the group structure");
  groups.validate(j);
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(locations[i].x) || !std::isfinite(locations[i].y))
      throw ValidationError("plot '" + plot_ids[i] + "' has non-finite coordinates");
    for (int g = 0; g < groups.groups(); ++g) {
      long total = 0;
      for (int s : groups.members[g]) {
        if (counts(i, s) < 0) {
          std::ostringstream msg;
          msg << "negative count for plot '" << plot_ids[i] << "', species '" << species_names[s]
              << "'";
          throw ValidationError(msg.str());
        }
        total += counts(i, s);
      }
      if (total > groups.resolution(i, g)) {
        std::ostringstream msg;
        msg << "counts exceed N for plot '" << plot_ids[i] << "', group '" << group_names[g]
            << "' (sum " << total << " > N " << groups.resolution(i, g) << ")";
        throw ValidationError(msg.str());
      }
    }
  }
}

Dataset Dataset::subset(std::span<const int> idx) const {
  Dataset out;
  out.species_names = species_names;
  out.group_names = group_names;
  out.groups.members = groups.members;
  const auto m = static_cast<Eigen::Index>(idx.size());
  out.groups.resolution.resize(m, groups.resolution.cols());
  out.counts.resize(m, counts.cols());
  for (Eigen::Index r = 0; r < m; ++r) {
    const int i = idx[static_cast<std::size_t>(r)];
    out.plot_ids.push_back(plot_ids.at(static_cast<std::size_t>(i)));
    out.locations.push_back(locations.at(static_cast<std::size_t>(i)));
    out.groups.resolution.row(r) = groups.resolution.row(i);
    out.counts.row(r) = counts.row(i);
  }
  return out;
}

}  // namespace jsdm
