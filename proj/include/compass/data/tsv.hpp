#pragma once

#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "compass/bio/ptm_types.hpp"
#include "compass/data/negatives.hpp"
#include "compass/data/split.hpp"

namespace compass {

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline bool skip_line(const std::string& line) { return line.empty() || line[0] == '#'; }

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << content;
}

}  // namespace detail

// Annotation TSV: protein_id, position, residue, ptm_type, source. The
// type column takes a registry name or a numeric index; '#' comments.
inline std::string annotations_to_tsv(const std::vector<PtmAnnotation>& annotations, const PtmTypeRegistry& registry,
                                      const std::string& source = "synthetic") {
  std::ostringstream out;
  out << "# protein_id\tposition\tresidue\tptm_type\tsource\n";
  for (const auto& a : annotations)
    out << a.protein_id << '\t' << a.position << '\t' << a.residue << '\t' << registry.at(a.ptm_type).name << '\t'
        << source << '\n';
  return out.str();
}

inline std::vector<PtmAnnotation> annotations_from_tsv(const std::string& text, const PtmTypeRegistry& registry) {
  std::vector<PtmAnnotation> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::skip_line(line)) continue;
    auto f = detail::split_tabs(line);
    if (f.size() < 4) throw DataError("annotations tsv line " + std::to_string(lineno) + ": expected >= 4 columns");
    PtmAnnotation a;
    a.protein_id = f[0];
    try {
      a.position = std::stoull(f[1]);
    } catch (...) {
      throw DataError("annotations tsv line " + std::to_string(lineno) + ": bad position '" + f[1] + "'");
    }
    if (f[2].size() != 1) throw DataError("annotations tsv line " + std::to_string(lineno) + ": bad residue");
    a.residue = f[2][0];
    if (!f[3].empty() && std::isdigit(static_cast<unsigned char>(f[3][0])))
      a.ptm_type = std::stoull(f[3]);
    else
      a.ptm_type = registry.index_of(f[3]);
    if (a.ptm_type >= registry.size())
      throw DataError("annotations tsv line " + std::to_string(lineno) + ": type index out of range");
    out.push_back(a);
  }
  return out;
}

// Split TSV: protein_id, split in {train, valid, test}.
inline std::string split_to_tsv(const SplitAssignment& splits) {
  std::ostringstream out;
  out << "# protein_id\tsplit\n";
  for (const auto& [id, s] : splits.by_id) out << id << '\t' << to_string(s) << '\n';
  return out.str();
}

inline SplitAssignment split_from_tsv(const std::string& text) {
  SplitAssignment out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::skip_line(line)) continue;
    auto f = detail::split_tabs(line);
    if (f.size() < 2) throw DataError("split tsv: expected 2 columns");
    const Split s = split_from_string(f[1]);
    out.by_id[f[0]] = s;
    ++out.counts[static_cast<std::size_t>(s)];
  }
  return out;
}

// Site prediction TSV: protein_id, position, ptm_type, score.
struct SitePrediction {
  std::string protein_id;
  std::size_t position = 0;
  std::size_t ptm_type = 0;
  double score = 0.0;
};

inline std::string predictions_to_tsv(const std::vector<SitePrediction>& preds, const PtmTypeRegistry& registry) {
  std::ostringstream out;
  out << "# protein_id\tposition\tptm_type\tscore\n";
  out.precision(17);
  for (const auto& p : preds)
    out << p.protein_id << '\t' << p.position << '\t' << registry.at(p.ptm_type).name << '\t' << p.score << '\n';
  return out.str();
}

inline std::vector<SitePrediction> predictions_from_tsv(const std::string& text, const PtmTypeRegistry& registry) {
  std::vector<SitePrediction> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::skip_line(line)) continue;
    auto f = detail::split_tabs(line);
    if (f.size() < 4) throw DataError("predictions tsv: expected 4 columns");
    SitePrediction p;
    p.protein_id = f[0];
    p.position = std::stoull(f[1]);
    if (!f[2].empty() && std::isdigit(static_cast<unsigned char>(f[2][0])))
      p.ptm_type = std::stoull(f[2]);
    else
      p.ptm_type = registry.index_of(f[2]);
    p.score = std::stod(f[3]);
    out.push_back(p);
  }
  return out;
}

// Pair TSV: enzyme_id, group, parent_id, center_position, peptide,
// ptm_type, label[, score]. Doubles as the pair-prediction format once the
// score column is filled.
struct PairRow {
  PairSample sample;
  double score = -1.0;  // negative = not scored
};

inline std::string pairs_to_tsv(const std::vector<PairRow>& rows, const PtmTypeRegistry& registry) {
  std::ostringstream out;
  out << "# enzyme_id\tgroup\tparent_id\tcenter_position\tpeptide\tptm_type\tlabel\tscore\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.sample.enzyme_id << '\t' << r.sample.group << '\t' << r.sample.parent_id << '\t'
        << r.sample.center_position << '\t' << r.sample.substrate_peptide << '\t'
        << registry.at(r.sample.ptm_type).name << '\t' << r.sample.label;
    if (r.score >= 0.0) out << '\t' << r.score;
    out << '\n';
  }
  return out.str();
}

inline std::vector<PairRow> pairs_from_tsv(const std::string& text, const PtmTypeRegistry& registry) {
  std::vector<PairRow> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::skip_line(line)) continue;
    auto f = detail::split_tabs(line);
    if (f.size() < 7) throw DataError("pairs tsv: expected >= 7 columns");
    PairRow r;
    r.sample.enzyme_id = f[0];
    r.sample.group = f[1];
    r.sample.parent_id = f[2];
    r.sample.center_position = std::stoull(f[3]);
    r.sample.substrate_peptide = f[4];
    if (!f[5].empty() && std::isdigit(static_cast<unsigned char>(f[5][0])))
      r.sample.ptm_type = std::stoull(f[5]);
    else
      r.sample.ptm_type = registry.index_of(f[5]);
    r.sample.label = std::stoi(f[6]);
    if (f.size() >= 8 && !f[7].empty()) r.score = std::stod(f[7]);
    out.push_back(r);
  }
  return out;
}

// Ranking TSV for retrieval scoring: query_id, candidate_id, score,
// relevance.
struct RankingRow {
  std::string query_id;
  std::string candidate_id;
  double score = 0.0;
  int relevance = 0;
};

inline std::string rankings_to_tsv(const std::vector<RankingRow>& rows) {
  std::ostringstream out;
  out << "# query_id\tcandidate_id\tscore\trelevance\n";
  out.precision(17);
  for (const auto& r : rows) out << r.query_id << '\t' << r.candidate_id << '\t' << r.score << '\t' << r.relevance << '\n';
  return out.str();
}

inline std::vector<RankingRow> rankings_from_tsv(const std::string& text) {
  std::vector<RankingRow> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::skip_line(line)) continue;
    auto f = detail::split_tabs(line);
    if (f.size() < 4) throw DataError("rankings tsv: expected 4 columns");
    out.push_back({f[0], f[1], std::stod(f[2]), std::stoi(f[3])});
  }
  return out;
}

}  // namespace compass
