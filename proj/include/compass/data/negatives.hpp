#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "compass/bio/ptm_types.hpp"
#include "compass/core/rng.hpp"
#include "compass/data/segmentation.hpp"

namespace compass {

// One enzyme/substrate pairing example. The substrate peptide is an
// odd-length window ('X'-padded) centered on the candidate residue.
struct PairSample {
  std::string substrate_peptide;
  std::size_t center_position = 0;  // 1-based position in the parent sequence
  std::string parent_id;
  std::string enzyme_id;
  std::string enzyme_sequence;
  std::size_t ptm_type = 0;
  int label = 0;
  std::string group;  // reporting key (e.g. enzyme family)
};

// Positions drawn to mate one positive site: same peptide window, same
// residue letter, not annotated with the class. Exactly one per positive
// when candidates exist; otherwise empty (the caller logs the orphan).
inline std::vector<std::size_t> sample_negative_positions(const std::string& window_seq, std::size_t window_start,
                                                          std::size_t positive_pos, std::size_t ptm_type,
                                                          const std::set<std::size_t>& annotated_positions,
                                                          const PtmTypeRegistry& registry, Rng& rng) {
  if (positive_pos < window_start || positive_pos >= window_start + window_seq.size())
    throw DataError("sample_negatives: positive position outside the window");
  const char target = window_seq[positive_pos - window_start];
  if (!registry.eligible(ptm_type, target))
    throw DataError("sample_negatives: positive residue not eligible for the class");

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < window_seq.size(); ++i) {
    const std::size_t abs_pos = window_start + i;
    if (abs_pos == positive_pos) continue;
    if (window_seq[i] != target) continue;
    if (annotated_positions.count(abs_pos)) continue;
    candidates.push_back(abs_pos);
  }
  if (candidates.empty()) return {};
  return {candidates[rng.below(candidates.size())]};
}

}  // namespace compass
