#pragma once

#include <map>
#include <string>
#include <vector>

#include "compass/metrics/metrics.hpp"
#include "compass/model/adam.hpp"
#include "compass/model/esps.hpp"
#include "compass/model/mspn.hpp"

namespace compass {

// ---- site-level evaluation ----

struct SiteEvalResult {
  double macro_f1 = 0.0;
  double macro_mcc = 0.0;
  std::vector<BinaryCounts> per_type;
};

// Threshold predictions at every non-pad position whose residue is
// eligible for the class; macro metrics over classes with support.
inline SiteEvalResult evaluate_sites(const MspnModel& model, const std::vector<PeptideSample>& samples,
                                     const PtmTypeRegistry& registry, double threshold = 0.5) {
  const std::size_t C = registry.size();
  SiteEvalResult result;
  result.per_type.assign(C, BinaryCounts{});
  for (const auto& sample : samples) {
    ForwardRngs rngs = ForwardRngs::at(0, 0);
    MspnTrace trace = model.forward(sample.sequence, Mode::eval, rngs);
    for (std::size_t i = 0; i < sample.length(); ++i) {
      if (sample.sequence[i] == kPadResidue) continue;
      for (std::size_t c = 0; c < C; ++c) {
        if (!registry.eligible(c, sample.sequence[i])) continue;
        const bool predicted = trace.probs.at(i, c) > threshold;
        const bool truth = sample.labels[i][c] > 0.5;
        BinaryCounts& b = result.per_type[c];
        if (predicted && truth) ++b.tp;
        else if (predicted && !truth) ++b.fp;
        else if (!predicted && truth) ++b.fn;
        else ++b.tn;
      }
    }
  }
  std::vector<double> f1s(C, 0.0), mccs(C, 0.0);
  std::vector<std::size_t> support(C, 0);
  for (std::size_t c = 0; c < C; ++c) {
    support[c] = result.per_type[c].tp + result.per_type[c].fn;
    if (result.per_type[c].total() > 0) {
      const ConfusionMetrics m = confusion_metrics(result.per_type[c]);
      f1s[c] = m.f1;
      mccs[c] = m.mcc;
    }
  }
  result.macro_f1 = macro_average(f1s, support).value;
  result.macro_mcc = macro_average(mccs, support).value;
  return result;
}

// ---- snapshots ----

inline std::vector<Tensor> snapshot_params(const ParamRegistry& reg) {
  std::vector<Tensor> snap;
  snap.reserve(reg.items().size());
  for (const auto& [n, t] : reg.items()) snap.push_back(t.clone());
  return snap;
}

inline void restore_snapshot(ParamRegistry& reg, const std::vector<Tensor>& snap) {
  if (snap.size() != reg.items().size()) throw std::logic_error("restore_snapshot: size mismatch");
  for (std::size_t i = 0; i < snap.size(); ++i) reg.items()[i].second.copy_from(snap[i]);
}

// ---- stage 1 ----

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_f1 = 0.0;
  double val_mcc = 0.0;
};

struct Stage1TrainResult {
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  double best_val_f1 = 0.0;
};

namespace detail {
inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}
}  // namespace detail

// Minimizes the configured objective with Adam; tracks validation macro-F1
// per epoch, stops early on patience or the target F1, and leaves the model
// holding the best-validation parameters.
inline Stage1TrainResult train_stage1(MspnModel& model, const std::vector<PeptideSample>& train_set,
                                      const std::vector<PeptideSample>& valid_set, const PtmTypeRegistry& registry,
                                      const TrainConfig& tc) {
  if (train_set.empty()) throw DataError("train_stage1: empty training split");
  ParamRegistry reg = model.params();
  AdamOptimizer adam(reg.trainable(), tc.lr, tc.beta1, tc.beta2, tc.adam_eps);

  Stage1TrainResult result;
  std::vector<Tensor> best = snapshot_params(reg);
  double best_f1 = -1.0;
  std::size_t since_best = 0;

  const auto& eval_set = valid_set.empty() ? train_set : valid_set;
  Rng shuffle_root(tc.seed, rng_stream::kShuffle);

  for (std::size_t epoch = 0; epoch < tc.max_epochs; ++epoch) {
    const auto order = detail::shuffled_indices(train_set.size(), shuffle_root.fork(epoch));
    double loss_acc = 0.0;
    std::size_t loss_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t stop = std::min(order.size(), start + tc.batch_size);
      GradTape tape;
      GradTape::Scope scope(&tape);
      std::vector<Tensor> logit_parts, label_parts;
      for (std::size_t k = start; k < stop; ++k) {
        const PeptideSample& sample = train_set[order[k]];
        const std::uint64_t tag = (static_cast<std::uint64_t>(epoch) << 40) ^
                                  (static_cast<std::uint64_t>(start / tc.batch_size) << 20) ^ (k - start);
        ForwardRngs rngs = ForwardRngs::at(tc.seed, tag);
        MspnTrace trace = model.forward(sample.sequence, Mode::train, rngs);
        logit_parts.push_back(gather_real_rows(trace.logits, trace.mask));
        label_parts.push_back(gather_real_rows(labels_tensor(sample), trace.mask));
      }
      Tensor logits = logit_parts.size() == 1
                          ? logit_parts[0]
                          : concat_rows(std::span<const Tensor>(logit_parts.data(), logit_parts.size()));
      Tensor labels = label_parts.size() == 1
                          ? label_parts[0]
                          : concat_rows(std::span<const Tensor>(label_parts.data(), label_parts.size()));
      Tensor loss;
      try {
        loss = stage1_loss(logits, labels, model.loss_params, model.loss_variant);
        tape.backward(loss);
      } catch (const NumericError& e) {
        throw NumericError("train_stage1: diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(start / tc.batch_size) + ": " + e.what());
      }
      adam.step();
      loss_acc += loss.value();
      ++loss_batches;
    }

    const SiteEvalResult eval = evaluate_sites(model, eval_set, registry);
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_acc / static_cast<double>(loss_batches);
    stats.val_f1 = eval.macro_f1;
    stats.val_mcc = eval.macro_mcc;
    result.history.push_back(stats);

    if (eval.macro_f1 > best_f1) {
      best_f1 = eval.macro_f1;
      best = snapshot_params(reg);
      result.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (eval.macro_f1 >= tc.stop_at_val_f1) break;
    if (since_best > tc.patience) break;
  }

  restore_snapshot(reg, best);
  result.best_val_f1 = best_f1;
  return result;
}

// ---- stage 2 ----

struct Stage2EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_auroc = 0.0;
};

struct Stage2TrainResult {
  std::vector<Stage2EpochStats> history;
  std::size_t best_epoch = 0;
  double best_val_auroc = 0.0;
};

// Embeddings of the frozen halves never change during stage-2 training, so
// they are computed once per distinct peptide / enzyme sequence.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(const EspsModel& model) : model_(model) {}

  const Tensor& substrate(const std::string& peptide) {
    auto it = sub_.find(peptide);
    if (it == sub_.end()) it = sub_.emplace(peptide, model_.substrate_embedding(peptide)).first;
    return it->second;
  }

  const Tensor& enzyme(const std::string& seq) {
    auto it = enz_.find(seq);
    if (it == enz_.end()) it = enz_.emplace(seq, model_.enzyme_embedding(seq)).first;
    return it->second;
  }

 private:
  const EspsModel& model_;
  std::map<std::string, Tensor> sub_, enz_;
};

inline double stage2_auroc(const EspsModel& model, EmbeddingCache& cache, const std::vector<PairSample>& pairs) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& p : pairs) {
    scores.push_back(model.score_from_embeddings(cache.substrate(p.substrate_peptide), cache.enzyme(p.enzyme_sequence))
                         .value());
    labels.push_back(p.label);
  }
  return auroc(scores, labels);
}

// Binary cross-entropy over pair labels with the stage-1 network frozen.
inline Stage2TrainResult train_stage2(EspsModel& model, const std::vector<PairSample>& train_pairs,
                                      const std::vector<PairSample>& valid_pairs, const TrainConfig& tc) {
  if (train_pairs.empty()) throw DataError("train_stage2: empty training split");
  ParamRegistry reg = model.stage2_params();
  AdamOptimizer adam(reg.trainable(), tc.lr, tc.beta1, tc.beta2, tc.adam_eps);
  EmbeddingCache cache(model);

  Stage2TrainResult result;
  std::vector<Tensor> best = snapshot_params(reg);
  double best_auroc = -1.0;
  std::size_t since_best = 0;
  const auto& eval_pairs = valid_pairs.empty() ? train_pairs : valid_pairs;
  Rng shuffle_root(tc.seed, rng_stream::kShuffle);

  for (std::size_t epoch = 0; epoch < tc.max_epochs; ++epoch) {
    const auto order = detail::shuffled_indices(train_pairs.size(), shuffle_root.fork(epoch));
    double loss_acc = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t stop = std::min(order.size(), start + tc.batch_size);
      GradTape tape;
      GradTape::Scope scope(&tape);
      std::vector<Tensor> prob_parts;
      Tensor labels = Tensor::zeros({stop - start, 1});
      for (std::size_t k = start; k < stop; ++k) {
        const PairSample& pair = train_pairs[order[k]];
        prob_parts.push_back(
            model.score_from_embeddings(cache.substrate(pair.substrate_peptide), cache.enzyme(pair.enzyme_sequence)));
        labels.at(k - start, 0) = pair.label;
      }
      Tensor probs = prob_parts.size() == 1
                         ? prob_parts[0]
                         : concat_rows(std::span<const Tensor>(prob_parts.data(), prob_parts.size()));
      Tensor loss;
      try {
        loss = bce_loss(probs, labels);
        tape.backward(loss);
      } catch (const NumericError& e) {
        throw NumericError("train_stage2: diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      adam.step();
      loss_acc += loss.value();
      ++batches;
    }

    Stage2EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_acc / static_cast<double>(batches);
    stats.val_auroc = stage2_auroc(model, cache, eval_pairs);
    result.history.push_back(stats);

    if (stats.val_auroc > best_auroc) {
      best_auroc = stats.val_auroc;
      best = snapshot_params(reg);
      result.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best > tc.patience) break;
  }

  restore_snapshot(reg, best);
  result.best_val_auroc = best_auroc;
  return result;
}

}  // namespace compass
