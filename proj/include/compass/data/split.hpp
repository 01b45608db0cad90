#pragma once

#include <algorithm>
#include <array>
#include <bitset>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "compass/core/rng.hpp"
#include "compass/data/fasta.hpp"

namespace compass {

enum class Split { train, valid, test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  throw DataError("unknown split '" + s + "'");
}

// Groups records into sequence-similarity clusters; ids are cluster labels
// per record. Swappable so an external clustering tool can be dropped in
// behind the same call.
class ClusteringBackend {
 public:
  virtual ~ClusteringBackend() = default;
  virtual std::vector<std::size_t> cluster(const std::vector<ProteinRecord>& records, double identity_threshold) = 0;
};

// Similarity = Jaccard over 3-mer sets; single linkage at >= threshold.
class KmerJaccardClustering final : public ClusteringBackend {
 public:
  std::vector<std::size_t> cluster(const std::vector<ProteinRecord>& records, double identity_threshold) override {
    const std::size_t n = records.size();
    constexpr std::size_t kSpace = kAlphabetSize * kAlphabetSize * kAlphabetSize;
    std::vector<std::unique_ptr<std::bitset<kSpace>>> kmers;
    kmers.reserve(n);
    for (const auto& r : records) {
      auto bits = std::make_unique<std::bitset<kSpace>>();
      if (r.sequence.size() >= 3)
        for (std::size_t i = 0; i + 3 <= r.sequence.size(); ++i) {
          const std::size_t code = (residue_index(r.sequence[i]) * kAlphabetSize + residue_index(r.sequence[i + 1])) *
                                       kAlphabetSize +
                                   residue_index(r.sequence[i + 2]);
          bits->set(code);
        }
      kmers.push_back(std::move(bits));
    }

    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
      while (parent[x] != x) {
        parent[x] = parent[parent[x]];
        x = parent[x];
      }
      return x;
    };

    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const std::size_t inter = (*kmers[i] & *kmers[j]).count();
        const std::size_t uni = (*kmers[i] | *kmers[j]).count();
        const double jaccard = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
        if (jaccard >= identity_threshold) parent[find(i)] = find(j);
      }

    std::vector<std::size_t> labels(n);
    std::map<std::size_t, std::size_t> remap;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t root = find(i);
      auto [it, inserted] = remap.emplace(root, remap.size());
      labels[i] = it->second;
    }
    return labels;
  }
};

struct SplitAssignment {
  std::map<std::string, Split> by_id;
  std::array<std::size_t, 3> counts{0, 0, 0};

  Split of(const std::string& id) const {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("no split recorded for '" + id + "'");
    return it->second;
  }
};

// Clusters at the identity threshold, then deals whole clusters
// (largest first, seeded tie-break) to whichever split is furthest below
// its target share. No cluster ever spans two splits.
inline SplitAssignment cluster_split(const std::vector<ProteinRecord>& records, double identity_threshold = 0.4,
                                     std::array<double, 3> ratios = {0.8, 0.1, 0.1}, std::uint64_t seed = 0,
                                     ClusteringBackend* backend = nullptr) {
  if (records.empty()) throw DataError("cluster_split: no records");
  const double ratio_sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(ratio_sum - 1.0) > 1e-9) throw DataError("cluster_split: ratios must sum to 1");

  KmerJaccardClustering default_backend;
  ClusteringBackend& cb = backend ? *backend : default_backend;
  const std::vector<std::size_t> labels = cb.cluster(records, identity_threshold);

  std::size_t num_clusters = 0;
  for (std::size_t l : labels) num_clusters = std::max(num_clusters, l + 1);
  std::vector<std::vector<std::size_t>> members(num_clusters);
  for (std::size_t i = 0; i < records.size(); ++i) members[labels[i]].push_back(i);

  Rng rng(seed, rng_stream::kSampling);
  std::vector<std::pair<std::size_t, std::uint64_t>> order;  // (cluster, tie key)
  order.reserve(num_clusters);
  for (std::size_t cl = 0; cl < num_clusters; ++cl) order.emplace_back(cl, rng.next_u64());
  std::sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
    if (members[a.first].size() != members[b.first].size()) return members[a.first].size() > members[b.first].size();
    return a.second < b.second;
  });

  SplitAssignment out;
  const double total = static_cast<double>(records.size());
  for (const auto& [cl, key] : order) {
    int best = 0;
    double best_deficit = -1e300;
    for (int s = 0; s < 3; ++s) {
      const double deficit = ratios[s] * total - static_cast<double>(out.counts[s]);
      if (deficit > best_deficit + 1e-12) {
        best_deficit = deficit;
        best = s;
      }
    }
    for (std::size_t idx : members[cl]) {
      out.by_id[records[idx].id] = static_cast<Split>(best);
      ++out.counts[static_cast<std::size_t>(best)];
    }
  }
  return out;
}

}  // namespace compass
