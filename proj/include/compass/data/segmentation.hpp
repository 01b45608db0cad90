#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "compass/bio/ptm_types.hpp"
#include "compass/data/fasta.hpp"

namespace compass {

// A windowed subsequence carrying its per-residue label matrix.
struct PeptideSample {
  std::string parent_id;
  std::size_t window_start = 1;  // 1-based position of the first residue
  std::string sequence;          // <= max_len letters
  std::vector<std::vector<double>> labels;  // L x C binary
  std::vector<bool> site_mask;              // candidate residues (eligible for >= 1 class)

  std::size_t length() const { return sequence.size(); }
};

// Deterministic greedy segmentation. Repeatedly takes the leftmost
// uncovered site, groups every uncovered site within max_len of it, and
// cuts a window centered on the group (clamped to the sequence). Each site
// is covered by exactly one window and every window holds at least one.
inline std::vector<std::pair<std::size_t, std::size_t>> greedy_segment_bounds(std::size_t seq_len,
                                                                              std::vector<std::size_t> sites,
                                                                              std::size_t max_len = 50) {
  if (sites.empty()) throw DataError("greedy_segment: no sites given");
  std::sort(sites.begin(), sites.end());
  for (std::size_t s : sites)
    if (s < 1 || s > seq_len) throw DataError("greedy_segment: site " + std::to_string(s) + " out of range");

  std::vector<std::pair<std::size_t, std::size_t>> windows;
  const std::size_t win_len = std::min(max_len, seq_len);
  const std::size_t max_start = seq_len >= max_len ? seq_len - max_len + 1 : 1;
  std::size_t idx = 0;
  while (idx < sites.size()) {
    const std::size_t first = sites[idx];
    std::size_t last = first;
    std::size_t next = idx;
    while (next < sites.size() && sites[next] <= first + max_len - 1) {
      last = sites[next];
      ++next;
    }
    const std::size_t span = last - first + 1;
    const std::size_t offset = (max_len - span) / 2;
    std::size_t start = first > offset ? first - offset : 1;
    start = std::clamp<std::size_t>(start, 1, max_start);
    windows.emplace_back(start, start + win_len - 1);
    idx = next;
  }
  return windows;
}

// Builds labeled peptide windows for one protein. Annotations outside the
// eligibility table are rejected; proteins without annotations yield
// nothing and should be skipped upstream.
inline std::vector<PeptideSample> greedy_segment(const ProteinRecord& record,
                                                 const std::vector<PtmAnnotation>& annotations,
                                                 const PtmTypeRegistry& registry, std::size_t max_len = 50) {
  std::vector<std::size_t> sites;
  for (const auto& a : annotations) {
    if (a.protein_id != record.id) continue;
    if (a.position < 1 || a.position > record.sequence.size())
      throw DataError("annotation position " + std::to_string(a.position) + " out of range for '" + record.id + "'");
    if (record.sequence[a.position - 1] != a.residue)
      throw DataError("annotation residue mismatch at " + record.id + ":" + std::to_string(a.position));
    if (!registry.eligible(a.ptm_type, a.residue))
      throw DataError("annotation at " + record.id + ":" + std::to_string(a.position) + " puts '" +
                      registry.at(a.ptm_type).name + "' on ineligible residue '" + std::string(1, a.residue) + "'");
    sites.push_back(a.position);
  }
  if (sites.empty()) return {};
  std::sort(sites.begin(), sites.end());
  sites.erase(std::unique(sites.begin(), sites.end()), sites.end());

  const std::size_t C = registry.size();
  std::vector<PeptideSample> out;
  for (auto [start, end] : greedy_segment_bounds(record.sequence.size(), sites, max_len)) {
    PeptideSample s;
    s.parent_id = record.id;
    s.window_start = start;
    s.sequence = record.sequence.substr(start - 1, end - start + 1);
    s.labels.assign(s.sequence.size(), std::vector<double>(C, 0.0));
    for (const auto& a : annotations) {
      if (a.protein_id != record.id) continue;
      if (a.position < start || a.position > end) continue;
      s.labels[a.position - start][a.ptm_type] = 1.0;
    }
    s.site_mask.assign(s.sequence.size(), false);
    for (std::size_t i = 0; i < s.sequence.size(); ++i)
      for (std::size_t c = 0; c < C; ++c)
        if (registry.eligible(c, s.sequence[i])) {
          s.site_mask[i] = true;
          break;
        }
    bool any = false;
    for (const auto& row : s.labels)
      for (double v : row) any = any || v > 0.0;
    if (!any) throw DataError("greedy_segment: emitted a window without a site");
    out.push_back(std::move(s));
  }
  return out;
}

// Odd-length window centered on a 1-based position, 'X'-padded beyond the
// sequence ends.
inline std::string window_peptide(const std::string& sequence, std::size_t pos, std::size_t len = 15) {
  if (len % 2 == 0) throw DataError("window_peptide: length must be odd");
  if (pos < 1 || pos > sequence.size()) throw DataError("window_peptide: position out of range");
  const std::size_t half = (len - 1) / 2;
  std::string out;
  out.reserve(len);
  for (std::size_t k = 0; k < len; ++k) {
    const long long p = static_cast<long long>(pos) - static_cast<long long>(half) + static_cast<long long>(k);
    if (p < 1 || p > static_cast<long long>(sequence.size()))
      out.push_back(kPadResidue);
    else
      out.push_back(sequence[static_cast<std::size_t>(p - 1)]);
  }
  return out;
}

}  // namespace compass
