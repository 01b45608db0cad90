#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "compass/bio/ptm_types.hpp"
#include "compass/core/rng.hpp"
#include "compass/data/negatives.hpp"
#include "compass/data/segmentation.hpp"

namespace compass {

// One modification class of a synthetic corpus. A non-empty motif is
// planted into sequences ("x" = any residue) with the modified residue at
// target_index; background_rate adds motif-less annotations on eligible
// residues.
struct SyntheticTypeSpec {
  std::string name;
  std::string eligible;
  std::string motif;
  std::size_t target_index = 0;
  double sites_per_protein = 1.0;
  double background_rate = 0.0;
};

// Same-site co-occurrence: each planted site of type `base` also carries
// type `rider` with probability `prob`.
struct CoOccurSpec {
  std::size_t base = 0;
  std::size_t rider = 1;
  double prob = 0.0;
};

// Enzyme family: enzymes share a substrate recognition motif, which is both
// planted into substrates (as sites of ptm_type) and embedded into each
// enzyme's own sequence as an identifying segment.
struct EnzymeFamilySpec {
  std::string name;
  std::size_t ptm_type = 0;
  std::string motif;
  std::size_t target_index = 0;
  std::size_t num_enzymes = 2;
  double sites_per_protein = 1.0;
};

struct CorpusSpec {
  std::size_t num_proteins = 100;
  std::size_t min_len = 25;
  std::size_t max_len = 60;
  std::vector<SyntheticTypeSpec> types;
  std::vector<CoOccurSpec> co_occur;
  std::vector<EnzymeFamilySpec> families;
  std::size_t enzyme_seq_len = 60;
  std::size_t pairs_per_enzyme = 30;
};

struct SyntheticCorpus {
  std::vector<ProteinRecord> records;
  std::vector<PtmAnnotation> annotations;
  std::vector<ProteinRecord> enzymes;
  std::map<std::string, std::string> enzyme_family;
  std::vector<PairSample> pairs;  // positives and their 1:1 negatives
  PtmTypeRegistry registry;
  std::size_t orphans = 0;  // positives that found no negative mate
};

namespace detail {

inline void validate_corpus_spec(const CorpusSpec& spec) {
  if (spec.types.empty()) throw DataError("corpus spec: no types");
  if (spec.min_len == 0 || spec.min_len > spec.max_len) throw DataError("corpus spec: bad length range");
  PtmTypeRegistry reg = [&] {
    std::vector<PtmType> ts;
    for (const auto& t : spec.types) ts.push_back({t.name, t.eligible});
    return PtmTypeRegistry(ts);
  }();
  auto check_motif = [&](const std::string& motif, std::size_t target, std::size_t type_idx, const std::string& what) {
    if (motif.empty()) return;
    if (motif.size() > spec.min_len) throw DataError("corpus spec: " + what + " motif longer than min protein length");
    if (target >= motif.size()) throw DataError("corpus spec: " + what + " target index out of range");
    const char letter = motif[target];
    if (letter == 'x') throw DataError("corpus spec: " + what + " target residue must be concrete");
    for (char c : motif)
      if (c != 'x' && !is_standard_residue(c)) throw DataError("corpus spec: " + what + " motif has invalid letter");
    if (!reg.eligible(type_idx, letter))
      throw DataError("corpus spec: " + what + " target residue not eligible for type " + reg.at(type_idx).name);
  };
  for (std::size_t i = 0; i < spec.types.size(); ++i) check_motif(spec.types[i].motif, spec.types[i].target_index, i, spec.types[i].name);
  for (const auto& f : spec.families) {
    if (f.ptm_type >= spec.types.size()) throw DataError("corpus spec: family type index out of range");
    if (f.motif.empty()) throw DataError("corpus spec: family motif required");
    check_motif(f.motif, f.target_index, f.ptm_type, f.name);
  }
  for (const auto& co : spec.co_occur) {
    if (co.base >= spec.types.size() || co.rider >= spec.types.size())
      throw DataError("corpus spec: co-occurrence type index out of range");
    auto base_target = [&](std::size_t idx) -> std::vector<char> {
      std::vector<char> letters;
      if (!spec.types[idx].motif.empty()) letters.push_back(spec.types[idx].motif[spec.types[idx].target_index]);
      for (const auto& f : spec.families)
        if (f.ptm_type == idx) letters.push_back(f.motif[f.target_index]);
      if (letters.empty())
        for (char c : spec.types[idx].eligible) letters.push_back(c);
      return letters;
    };
    for (char c : base_target(co.base))
      if (!reg.eligible(co.rider, c))
        throw DataError("corpus spec: rider type " + spec.types[co.rider].name +
                        " cannot sit on base sites (residue '" + std::string(1, c) + "')");
  }
}

struct Planting {
  std::size_t position;  // 1-based target position
  std::size_t ptm_type;
  std::string family;  // empty when type-level
};

// Writes `motif` into seq at 0-based offset; 'x' keeps the existing letter.
inline void stamp_motif(std::string& seq, std::size_t offset, const std::string& motif) {
  for (std::size_t k = 0; k < motif.size(); ++k)
    if (motif[k] != 'x') seq[offset + k] = motif[k];
}

}  // namespace detail

// Fully reproducible per seed: sequences with planted motifs, annotations
// wherever motifs (or background draws) occur, co-occurrence riders at the
// stated probability, and enzyme/substrate pairs with 1:1 negatives.
inline SyntheticCorpus generate_synthetic_corpus(const CorpusSpec& spec, std::uint64_t seed) {
  detail::validate_corpus_spec(spec);

  SyntheticCorpus corpus;
  {
    std::vector<PtmType> ts;
    for (const auto& t : spec.types) ts.push_back({t.name, t.eligible});
    corpus.registry = PtmTypeRegistry(ts);
  }

  Rng seq_rng = Rng(seed, rng_stream::kCorpus).fork(1);
  Rng plant_rng = Rng(seed, rng_stream::kCorpus).fork(2);
  Rng co_rng = Rng(seed, rng_stream::kCorpus).fork(3);
  Rng enzyme_rng = Rng(seed, rng_stream::kCorpus).fork(4);
  Rng pair_rng = Rng(seed, rng_stream::kCorpus).fork(5);

  std::map<std::string, std::vector<std::pair<std::string, std::size_t>>> family_sites;

  for (std::size_t pi = 0; pi < spec.num_proteins; ++pi) {
    ProteinRecord rec;
    rec.id = "synth" + std::to_string(pi);
    const std::size_t len = spec.min_len + seq_rng.below(spec.max_len - spec.min_len + 1);
    rec.sequence.reserve(len);
    for (std::size_t i = 0; i < len; ++i) rec.sequence.push_back(kAminoAcids[seq_rng.below(20)]);

    std::vector<std::pair<std::size_t, std::size_t>> reserved;  // 0-based [start, end]
    std::vector<detail::Planting> plantings;

    auto plant = [&](const std::string& motif, std::size_t target_index, std::size_t type_idx,
                     const std::string& family, double per_protein) {
      std::size_t count = static_cast<std::size_t>(per_protein);
      if (plant_rng.uniform() < per_protein - static_cast<double>(count)) ++count;
      for (std::size_t n = 0; n < count; ++n) {
        bool placed = false;
        for (int attempt = 0; attempt < 30 && !placed; ++attempt) {
          const std::size_t off = plant_rng.below(len - motif.size() + 1);
          bool clash = false;
          for (auto [s, e] : reserved)
            if (off <= e && off + motif.size() - 1 >= s) clash = true;
          if (clash) continue;
          detail::stamp_motif(rec.sequence, off, motif);
          reserved.emplace_back(off, off + motif.size() - 1);
          plantings.push_back({off + target_index + 1, type_idx, family});
          placed = true;
        }
      }
    };

    for (std::size_t t = 0; t < spec.types.size(); ++t)
      if (!spec.types[t].motif.empty() && spec.types[t].sites_per_protein > 0)
        plant(spec.types[t].motif, spec.types[t].target_index, t, "", spec.types[t].sites_per_protein);
    for (const auto& f : spec.families) plant(f.motif, f.target_index, f.ptm_type, f.name, f.sites_per_protein);

    std::set<std::pair<std::size_t, std::size_t>> seen;  // (position, type)
    auto annotate = [&](std::size_t pos, std::size_t type_idx, const std::string& family) {
      if (!seen.insert({pos, type_idx}).second) return;
      corpus.annotations.push_back({rec.id, pos, rec.sequence[pos - 1], type_idx});
      if (!family.empty()) family_sites[family].emplace_back(rec.id, pos);
    };

    for (const auto& p : plantings) annotate(p.position, p.ptm_type, p.family);

    // motif-less background annotations
    for (std::size_t t = 0; t < spec.types.size(); ++t) {
      if (spec.types[t].background_rate <= 0) continue;
      if (plant_rng.uniform() >= spec.types[t].background_rate) continue;
      std::vector<std::size_t> eligible_positions;
      for (std::size_t i = 0; i < len; ++i)
        if (corpus.registry.eligible(t, rec.sequence[i]) && !seen.count({i + 1, t})) eligible_positions.push_back(i + 1);
      if (!eligible_positions.empty())
        annotate(eligible_positions[plant_rng.below(eligible_positions.size())], t, "");
    }

    // same-site riders
    for (const auto& p : plantings)
      for (const auto& co : spec.co_occur)
        if (co.base == p.ptm_type && co_rng.uniform() < co.prob) annotate(p.position, co.rider, "");

    corpus.records.push_back(std::move(rec));
  }

  // enzymes: random sequence with the family motif stamped in as a tag
  for (const auto& f : spec.families) {
    for (std::size_t e = 0; e < f.num_enzymes; ++e) {
      ProteinRecord enz;
      enz.id = f.name + "_enz" + std::to_string(e);
      const std::size_t len = std::max(spec.enzyme_seq_len, f.motif.size());
      enz.sequence.reserve(len);
      for (std::size_t i = 0; i < len; ++i) enz.sequence.push_back(kAminoAcids[enzyme_rng.below(20)]);
      detail::stamp_motif(enz.sequence, enzyme_rng.below(len - f.motif.size() + 1), f.motif);
      corpus.enzyme_family[enz.id] = f.name;
      corpus.enzymes.push_back(std::move(enz));
    }
  }

  // pair samples: positives from family-tagged sites, 1:1 negatives from
  // unannotated same-letter residues in the same peptide window
  std::map<std::string, const ProteinRecord*> by_id;
  for (const auto& r : corpus.records) by_id[r.id] = &r;
  std::map<std::pair<std::string, std::size_t>, std::set<std::size_t>> annotated;  // (protein, type) -> positions
  for (const auto& a : corpus.annotations) annotated[{a.protein_id, a.ptm_type}].insert(a.position);

  const std::size_t window_len = 15;
  for (const auto& enz : corpus.enzymes) {
    const std::string family = corpus.enzyme_family[enz.id];
    const EnzymeFamilySpec* fspec = nullptr;
    for (const auto& f : spec.families)
      if (f.name == family) fspec = &f;
    auto sites = family_sites[family];
    // deterministic shuffle, then truncate
    for (std::size_t i = sites.size(); i > 1; --i) std::swap(sites[i - 1], sites[pair_rng.below(i)]);
    if (sites.size() > spec.pairs_per_enzyme) sites.resize(spec.pairs_per_enzyme);
    for (const auto& [pid, pos] : sites) {
      const ProteinRecord& rec = *by_id.at(pid);
      PairSample positive;
      positive.substrate_peptide = window_peptide(rec.sequence, pos, window_len);
      positive.center_position = pos;
      positive.parent_id = pid;
      positive.enzyme_id = enz.id;
      positive.enzyme_sequence = enz.sequence;
      positive.ptm_type = fspec->ptm_type;
      positive.label = 1;
      positive.group = family;
      corpus.pairs.push_back(positive);

      const std::size_t half = (window_len - 1) / 2;
      const std::size_t wstart = pos > half ? pos - half : 1;
      const std::size_t wend = std::min(rec.sequence.size(), pos + half);
      const std::string wseq = rec.sequence.substr(wstart - 1, wend - wstart + 1);
      auto negs = sample_negative_positions(wseq, wstart, pos, fspec->ptm_type,
                                            annotated[{pid, fspec->ptm_type}], corpus.registry, pair_rng);
      if (negs.empty()) {
        ++corpus.orphans;
        continue;
      }
      PairSample negative = positive;
      negative.substrate_peptide = window_peptide(rec.sequence, negs[0], window_len);
      negative.center_position = negs[0];
      negative.label = 0;
      corpus.pairs.push_back(negative);
    }
  }

  return corpus;
}

// ---- corpus spec JSON ----

inline CorpusSpec corpus_spec_from_json(const nlohmann::json& j) {
  CorpusSpec s;
  s.num_proteins = j.value("num_proteins", s.num_proteins);
  s.min_len = j.value("min_len", s.min_len);
  s.max_len = j.value("max_len", s.max_len);
  s.enzyme_seq_len = j.value("enzyme_seq_len", s.enzyme_seq_len);
  s.pairs_per_enzyme = j.value("pairs_per_enzyme", s.pairs_per_enzyme);
  for (const auto& t : j.value("types", nlohmann::json::array())) {
    SyntheticTypeSpec ts;
    ts.name = t.at("name").get<std::string>();
    ts.eligible = t.at("eligible").get<std::string>();
    ts.motif = t.value("motif", std::string());
    ts.target_index = t.value("target_index", 0);
    ts.sites_per_protein = t.value("sites_per_protein", 1.0);
    ts.background_rate = t.value("background_rate", 0.0);
    s.types.push_back(ts);
  }
  for (const auto& c : j.value("co_occur", nlohmann::json::array()))
    s.co_occur.push_back({c.at("base").get<std::size_t>(), c.at("rider").get<std::size_t>(),
                          c.at("prob").get<double>()});
  for (const auto& f : j.value("families", nlohmann::json::array())) {
    EnzymeFamilySpec fs;
    fs.name = f.at("name").get<std::string>();
    fs.ptm_type = f.at("ptm_type").get<std::size_t>();
    fs.motif = f.at("motif").get<std::string>();
    fs.target_index = f.value("target_index", 0);
    fs.num_enzymes = f.value("num_enzymes", 2);
    fs.sites_per_protein = f.value("sites_per_protein", 1.0);
    s.families.push_back(fs);
  }
  return s;
}

}  // namespace compass
