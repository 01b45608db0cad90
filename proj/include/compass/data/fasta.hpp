#pragma once

#include <cctype>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "compass/bio/alphabet.hpp"
#include "compass/core/error.hpp"

namespace compass {

struct ProteinRecord {
  std::string id;
  std::string sequence;  // uppercase, 20 residues + 'X'
};

// Header lines start '>'; the id is the first whitespace-delimited token.
// Multi-line bodies are concatenated and uppercased. Characters outside the
// residue alphabet and duplicate ids are errors.
inline std::vector<ProteinRecord> parse_fasta(const std::string& text) {
  std::vector<ProteinRecord> records;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  bool have_record = false;
  ProteinRecord current;

  auto flush = [&] {
    if (!have_record) return;
    if (current.id.empty()) throw DataError("fasta: record with empty id");
    if (current.sequence.empty()) throw DataError("fasta: record '" + current.id + "' has an empty sequence");
    if (!seen.insert(current.id).second) throw DataError("fasta: duplicate id '" + current.id + "'");
    records.push_back(current);
    current = ProteinRecord{};
  };

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '>') {
      flush();
      have_record = true;
      std::istringstream hs(line.substr(1));
      hs >> current.id;
    } else {
      if (!have_record) throw DataError("fasta: sequence data before any header");
      for (char c : line) {
        if (std::isspace(static_cast<unsigned char>(c))) continue;
        const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        if (!is_valid_residue(up)) throw DataError("fasta: invalid character '" + std::string(1, c) + "' in '" +
                                                   current.id + "'");
        current.sequence.push_back(up);
      }
    }
  }
  flush();
  return records;
}

inline std::string to_fasta(const std::vector<ProteinRecord>& records, std::size_t width = 60) {
  std::ostringstream out;
  for (const auto& r : records) {
    out << '>' << r.id << '\n';
    for (std::size_t i = 0; i < r.sequence.size(); i += width) out << r.sequence.substr(i, width) << '\n';
  }
  return out.str();
}

}  // namespace compass
