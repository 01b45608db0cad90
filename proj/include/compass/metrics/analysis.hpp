#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "compass/data/tsv.hpp"
#include "compass/model/mspn.hpp"

namespace compass {

// Gradient-times-input attribution: the gradient of one pre-sigmoid logit
// with respect to the input embedding, reduced per residue by the dot
// product with that residue's embedding. Positive scores support the
// prediction.
inline std::vector<double> input_gradient_attribution(const MspnModel& model, const std::string& peptide,
                                                      std::size_t position, std::size_t ptm_type) {
  if (position < 1 || position > peptide.size()) throw DataError("attribution: position out of range");
  if (ptm_type >= model.cfg.num_types) throw DataError("attribution: class index out of range");

  GradTape tape;
  GradTape::Scope scope(&tape);
  ForwardRngs rngs = ForwardRngs::at(0, 0);
  MspnTrace trace = model.forward(peptide, Mode::eval, rngs, /*trace_input_grads=*/true);
  Tensor logit = select_row(trace.logits, position - 1);
  tape.backward(slice_cols(logit, ptm_type, ptm_type + 1));

  const std::vector<double> gp = trace.protein_track.grad();
  const std::vector<double> gc = trace.chem_track.grad();
  const std::size_t dp = trace.protein_track.cols(), dc = trace.chem_track.cols();
  std::vector<double> scores(peptide.size(), 0.0);
  for (std::size_t i = 0; i < peptide.size(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < dp; ++j) acc += gp[i * dp + j] * trace.protein_track.at(i, j);
    for (std::size_t j = 0; j < dc; ++j) acc += gc[i * dc + j] * trace.chem_track.at(i, j);
    scores[i] = acc;
  }
  return scores;
}

// Position-by-residue frequency matrix over the top-scoring
// predicted-positive peptides of one group. 'X' positions are left out of
// the column denominators.
struct MotifLogo {
  std::size_t peptide_length = 0;
  std::vector<std::array<double, 20>> frequencies;  // position x residue (kAminoAcids order)
  std::size_t peptides_used = 0;
};

inline MotifLogo motif_logo(const std::vector<PairRow>& predictions, const std::string& group_key,
                            std::size_t top_k = 100, double positive_threshold = 0.5) {
  std::vector<const PairRow*> hits;
  for (const auto& row : predictions)
    if (row.sample.group == group_key && row.score > positive_threshold) hits.push_back(&row);
  if (hits.empty()) throw DataError("motif_logo: no positive-predicted peptides for group '" + group_key + "'");
  std::sort(hits.begin(), hits.end(), [](const PairRow* a, const PairRow* b) {
    if (a->score != b->score) return a->score > b->score;
    if (a->sample.parent_id != b->sample.parent_id) return a->sample.parent_id < b->sample.parent_id;
    return a->sample.center_position < b->sample.center_position;
  });
  if (hits.size() > top_k) hits.resize(top_k);

  MotifLogo logo;
  logo.peptide_length = hits[0]->sample.substrate_peptide.size();
  logo.peptides_used = hits.size();
  logo.frequencies.assign(logo.peptide_length, {});
  std::vector<std::size_t> counted(logo.peptide_length, 0);
  for (const PairRow* h : hits) {
    const std::string& pep = h->sample.substrate_peptide;
    if (pep.size() != logo.peptide_length) throw DataError("motif_logo: mixed peptide lengths in group");
    for (std::size_t i = 0; i < pep.size(); ++i) {
      if (pep[i] == kPadResidue) continue;
      logo.frequencies[i][residue_index(pep[i])] += 1.0;
      ++counted[i];
    }
  }
  for (std::size_t i = 0; i < logo.peptide_length; ++i)
    if (counted[i] > 0)
      for (double& f : logo.frequencies[i]) f /= static_cast<double>(counted[i]);
  return logo;
}

// Effect of a point substitution on one site's class probability, scored
// over the same window coordinates for both sequences.
struct VariantDelta {
  double wt_prob = 0.0;
  double mt_prob = 0.0;
  double diff = 0.0;
};

struct Mutation {
  char ref = 'A';
  std::size_t position = 0;  // 1-based
  char alt = 'A';
};

// "S123C"-style notation.
inline Mutation parse_mutation(const std::string& text) {
  if (text.size() < 3) throw DataError("variant '" + text + "': too short");
  Mutation m;
  m.ref = text.front();
  m.alt = text.back();
  if (!is_standard_residue(m.ref) || !is_standard_residue(m.alt))
    throw DataError("variant '" + text + "': reference and alternate must be residue letters");
  try {
    m.position = std::stoull(text.substr(1, text.size() - 2));
  } catch (...) {
    throw DataError("variant '" + text + "': bad position");
  }
  return m;
}

inline VariantDelta variant_delta(const MspnModel& model, const ProteinRecord& record, const Mutation& mutation,
                                  std::size_t site_position, std::size_t ptm_type,
                                  std::size_t window_len = 0) {
  if (window_len == 0) window_len = model.cfg.max_peptide_len;
  if (window_len % 2 == 0) --window_len;
  if (mutation.position < 1 || mutation.position > record.sequence.size())
    throw DataError("variant position out of range");
  if (record.sequence[mutation.position - 1] != mutation.ref)
    throw DataError("variant does not match sequence: expected '" + std::string(1, mutation.ref) + "' at " +
                    std::to_string(mutation.position) + ", found '" +
                    std::string(1, record.sequence[mutation.position - 1]) + "'");
  if (site_position < 1 || site_position > record.sequence.size()) throw DataError("site position out of range");
  if (ptm_type >= model.cfg.num_types) throw DataError("class index out of range");

  std::string mutated = record.sequence;
  mutated[mutation.position - 1] = mutation.alt;

  const std::string wt_window = window_peptide(record.sequence, site_position, window_len);
  const std::string mt_window = window_peptide(mutated, site_position, window_len);
  const std::size_t center = (window_len - 1) / 2;

  ForwardRngs r1 = ForwardRngs::at(0, 0), r2 = ForwardRngs::at(0, 0);
  VariantDelta out;
  out.wt_prob = model.forward(wt_window, Mode::eval, r1).probs.at(center, ptm_type);
  out.mt_prob = model.forward(mt_window, Mode::eval, r2).probs.at(center, ptm_type);
  out.diff = out.mt_prob - out.wt_prob;
  return out;
}

}  // namespace compass
