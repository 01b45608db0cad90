#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "compass/bio/ptm_types.hpp"
#include "compass/core/error.hpp"

namespace compass {

// Co-occurrence statistics over annotation sites. A site is a distinct
// (protein, position); joint[a][b] counts sites carrying both classes.
struct CooccurrenceCounts {
  std::size_t num_types = 0;
  std::vector<std::vector<std::size_t>> joint;  // C x C, symmetric, zero diagonal
  std::vector<std::size_t> marginal;            // length C
  std::size_t total_sites = 0;
};

inline CooccurrenceCounts build_cooccurrence(const std::vector<PtmAnnotation>& annotations, std::size_t num_types) {
  CooccurrenceCounts counts;
  counts.num_types = num_types;
  counts.joint.assign(num_types, std::vector<std::size_t>(num_types, 0));
  counts.marginal.assign(num_types, 0);

  std::map<std::pair<std::string, std::size_t>, std::set<std::size_t>> site_types;
  for (const auto& a : annotations) {
    if (a.ptm_type >= num_types)
      throw DataError("annotation type index " + std::to_string(a.ptm_type) + " out of range (C=" +
                      std::to_string(num_types) + ")");
    site_types[{a.protein_id, a.position}].insert(a.ptm_type);
  }

  counts.total_sites = site_types.size();
  for (const auto& [site, types] : site_types) {
    for (std::size_t t : types) ++counts.marginal[t];
    for (auto it = types.begin(); it != types.end(); ++it)
      for (auto jt = std::next(it); jt != types.end(); ++jt) {
        ++counts.joint[*it][*jt];
        ++counts.joint[*jt][*it];
      }
  }
  return counts;
}

// Pairwise association prior: symmetric, zero diagonal, entries in [-1, 1].
struct CrosstalkMatrix {
  std::size_t num_types = 0;
  std::vector<double> values;  // row-major C x C
  std::vector<std::string> labels;

  double at(std::size_t a, std::size_t b) const { return values[a * num_types + b]; }
  double& at(std::size_t a, std::size_t b) { return values[a * num_types + b]; }
};

// Normalized pointwise mutual information per type pair:
//   ln(p(a,b) / (p(a) p(b))) / (-ln p(a,b))
// Conventions: never-co-occurring pairs with both marginals positive map
// to -1; pairs involving an unobserved type map to 0; a pair present at
// every site maps to +1.
inline CrosstalkMatrix npmi_matrix(const CooccurrenceCounts& counts) {
  if (counts.total_sites == 0) throw DataError("npmi_matrix: no sites counted");
  const std::size_t c = counts.num_types;
  const double total = static_cast<double>(counts.total_sites);

  CrosstalkMatrix m;
  m.num_types = c;
  m.values.assign(c * c, 0.0);

  for (std::size_t a = 0; a < c; ++a) {
    for (std::size_t b = a + 1; b < c; ++b) {
      const std::size_t ma = counts.marginal[a], mb = counts.marginal[b];
      const std::size_t jab = counts.joint[a][b];
      double v = 0.0;
      if (ma == 0 || mb == 0) {
        v = 0.0;
      } else if (jab == 0) {
        v = -1.0;
      } else {
        const double pab = jab / total;
        const double pa = ma / total, pb = mb / total;
        if (pab >= 1.0) {
          v = 1.0;
        } else {
          v = std::log(pab / (pa * pb)) / (-std::log(pab));
        }
      }
      v = std::clamp(v, -1.0, 1.0);
      m.at(a, b) = v;
      m.at(b, a) = v;
    }
  }
  return m;
}

inline nlohmann::json crosstalk_to_json(const CrosstalkMatrix& m) {
  nlohmann::json j;
  j["num_types"] = m.num_types;
  j["labels"] = m.labels;
  std::vector<std::vector<double>> rows(m.num_types, std::vector<double>(m.num_types));
  for (std::size_t a = 0; a < m.num_types; ++a)
    for (std::size_t b = 0; b < m.num_types; ++b) rows[a][b] = m.at(a, b);
  j["npmi"] = rows;
  return j;
}

inline CrosstalkMatrix crosstalk_from_json(const nlohmann::json& j) {
  CrosstalkMatrix m;
  m.num_types = j.at("num_types").get<std::size_t>();
  if (j.contains("labels")) m.labels = j.at("labels").get<std::vector<std::string>>();
  const auto rows = j.at("npmi").get<std::vector<std::vector<double>>>();
  if (rows.size() != m.num_types) throw DataError("crosstalk json: row count mismatch");
  m.values.assign(m.num_types * m.num_types, 0.0);
  for (std::size_t a = 0; a < m.num_types; ++a) {
    if (rows[a].size() != m.num_types) throw DataError("crosstalk json: column count mismatch");
    for (std::size_t b = 0; b < m.num_types; ++b) m.at(a, b) = rows[a][b];
  }
  return m;
}

}  // namespace compass
