// Command-line front end: data preparation, crosstalk statistics, training,
// prediction, evaluation, and analysis, with JSON configs and per-run
// reproducibility manifests.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "compass/core/gradcheck.hpp"
#include "compass/crosstalk/crosstalk.hpp"
#include "compass/data/synthetic.hpp"
#include "compass/data/tsv.hpp"
#include "compass/metrics/analysis.hpp"
#include "compass/metrics/metrics.hpp"
#include "compass/model/train.hpp"
#include "compass/run/manifest.hpp"

namespace fs = std::filesystem;
using namespace compass;
using nlohmann::json;

namespace {

struct GlobalOpts {
  bool quiet = false;
  bool json_output = false;
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
};

void info(const GlobalOpts& g, const std::string& msg) {
  if (!g.quiet) std::cerr << msg << '\n';
}

// ---- config handling: defaults < config file < --set < --seed ----

void apply_override(json& j, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw DataError("--set expects key=value, got '" + kv + "'");
  const std::string key = kv.substr(0, eq);
  const std::string value = kv.substr(eq + 1);
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw DataError("--set: empty key segment in '" + key + "'");
    if (dot == std::string::npos) {
      json parsed = json::parse(value, nullptr, false);
      (*node)[part] = parsed.is_discarded() ? json(value) : parsed;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

struct ResolvedConfig {
  ModelConfig model;
  TrainConfig train;
  PtmTypeRegistry types;
  std::uint64_t seed = 0;
  json raw;
};

PtmTypeRegistry types_from_json(const json& arr) {
  std::vector<PtmType> types;
  for (const auto& t : arr) types.push_back({t.at("name").get<std::string>(), t.at("eligible").get<std::string>()});
  return PtmTypeRegistry(types);
}

json types_to_json(const PtmTypeRegistry& reg) {
  json arr = json::array();
  for (const auto& t : reg.types()) arr.push_back({{"name", t.name}, {"eligible", t.eligible}});
  return arr;
}

ResolvedConfig resolve_config(const GlobalOpts& g) {
  json j;
  if (!g.config_path.empty()) j = json::parse(detail::read_file(g.config_path));
  for (const auto& kv : g.overrides) apply_override(j, kv);

  ResolvedConfig rc;
  if (j.contains("model")) rc.model = j.at("model").get<ModelConfig>();
  if (j.contains("train")) rc.train = j.at("train").get<TrainConfig>();
  rc.types = j.contains("types") ? types_from_json(j.at("types")) : PtmTypeRegistry::default_eight();
  rc.model.num_types = rc.types.size();

  if (g.seed) {
    rc.seed = *g.seed;
  } else if (j.contains("seed")) {
    rc.seed = j.at("seed").get<std::uint64_t>();
  } else if (const char* env = std::getenv("COMPASS_SEED")) {
    rc.seed = std::strtoull(env, nullptr, 10);
  } else {
    rc.seed = rc.train.seed;
  }
  rc.train.seed = rc.seed;

  rc.raw["model"] = rc.model;
  rc.raw["train"] = rc.train;
  rc.raw["types"] = types_to_json(rc.types);
  rc.raw["seed"] = rc.seed;
  return rc;
}

void write_resolved_config(const std::string& path, const ResolvedConfig& rc) {
  detail::write_file(path, rc.raw.dump(2) + "\n");
}

// ---- common loading ----

std::vector<ProteinRecord> load_fasta_file(const std::string& path) { return parse_fasta(detail::read_file(path)); }

std::vector<PtmAnnotation> load_annotations_file(const std::string& path, const PtmTypeRegistry& reg) {
  return annotations_from_tsv(detail::read_file(path), reg);
}

std::map<std::string, std::vector<PtmAnnotation>> annotations_by_protein(const std::vector<PtmAnnotation>& all) {
  std::map<std::string, std::vector<PtmAnnotation>> out;
  for (const auto& a : all) out[a.protein_id].push_back(a);
  return out;
}

std::vector<PeptideSample> build_samples(const std::vector<ProteinRecord>& records,
                                         const std::vector<PtmAnnotation>& annotations, const PtmTypeRegistry& reg,
                                         std::size_t max_len, const SplitAssignment* splits,
                                         std::optional<Split> keep) {
  auto by_protein = annotations_by_protein(annotations);
  std::vector<PeptideSample> out;
  for (const auto& rec : records) {
    if (splits && keep && splits->of(rec.id) != *keep) continue;
    auto it = by_protein.find(rec.id);
    if (it == by_protein.end()) continue;  // windows must contain a site
    for (auto& s : greedy_segment(rec, it->second, reg, max_len)) out.push_back(std::move(s));
  }
  return out;
}

MspnModel load_stage1(const std::string& checkpoint_path, const ResolvedConfig& rc, bool force,
                      const GlobalOpts& g) {
  Checkpoint ck = load_checkpoint(checkpoint_path);
  const std::uint64_t expect = config_hash(rc.model, rc.seed);
  if (ck.config_hash != expect) {
    const std::string msg = "checkpoint config hash " + hex64(ck.config_hash) + " != current " + hex64(expect);
    if (!force) throw DataError(msg + " (pass --force to proceed)");
    info(g, "warning: " + msg + ", proceeding (--force)");
  }
  MspnModel model = MspnModel::init(rc.model, rc.seed);
  ParamRegistry reg = model.params();
  restore_params(ck, reg);
  return model;
}

RunManifest make_manifest(const std::string& command, std::uint64_t seed, std::uint64_t cfg_hash,
                          const std::vector<std::string>& inputs, const std::vector<std::string>& artifacts,
                          const WallClock& clock) {
  RunManifest m;
  m.command = command;
  m.seed = seed;
  m.config_hash = cfg_hash;
  for (const auto& p : inputs)
    if (!p.empty()) m.input_digests[p] = digest_file(p);
  m.artifacts = artifacts;
  m.wall_seconds = clock.seconds();
  return m;
}

// ---- site prediction over tiled windows ----

std::vector<SitePrediction> predict_sites(const MspnModel& model, const std::vector<ProteinRecord>& records,
                                          const PtmTypeRegistry& reg, std::size_t stride) {
  const std::size_t max_len = model.cfg.max_peptide_len;
  if (stride == 0) stride = max_len;
  std::vector<SitePrediction> out;
  for (const auto& rec : records) {
    const std::size_t L = rec.sequence.size();
    std::map<std::pair<std::size_t, std::size_t>, std::pair<double, std::size_t>> acc;  // (pos,type) -> (sum, n)
    std::vector<std::size_t> starts;
    if (L <= max_len) {
      starts.push_back(1);
    } else {
      for (std::size_t s = 1; s + max_len - 1 < L; s += stride) starts.push_back(s);
      starts.push_back(L - max_len + 1);
    }
    for (std::size_t start : starts) {
      const std::string window = rec.sequence.substr(start - 1, std::min(max_len, L));
      ForwardRngs rngs = ForwardRngs::at(0, 0);
      MspnTrace trace = model.forward(window, Mode::eval, rngs);
      for (std::size_t i = 0; i < window.size(); ++i) {
        if (window[i] == kPadResidue) continue;
        for (std::size_t c = 0; c < reg.size(); ++c) {
          if (!reg.eligible(c, window[i])) continue;
          auto& cell = acc[{start + i, c}];
          cell.first += trace.probs.at(i, c);
          cell.second += 1;
        }
      }
    }
    for (const auto& [key, sum_n] : acc)
      out.push_back({rec.id, key.first, key.second, sum_n.first / static_cast<double>(sum_n.second)});
  }
  return out;
}

// ---- gradcheck battery ----

double gradcheck_battery(std::uint64_t seed, bool full_graphs) {
  Rng rng(seed, 1);
  auto rt = [&](Shape s, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(s));
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
    return t;
  };
  double worst = 0.0;
  auto track = [&](double err) { worst = std::max(worst, err); };

  for (int trial = 0; trial < 5; ++trial) {
    Tensor x = rt({3, 4});
    Tensor y = rt({3, 4});
    Tensor m = rt({4, 3});
    Tensor pos = rt({3, 4}, 0.05, 0.95);
    Tensor s = rt({}, 0.3, 1.5);
    Tensor v = rt({4});
    track(grad_check([&](const Tensor& t) { return sum(mul(t, y)); }, x));
    track(grad_check([&](const Tensor& t) { return sum(matmul(t, m)); }, x));
    track(grad_check([&](const Tensor& t) { return sum(sigmoid(t)); }, x));
    track(grad_check([&](const Tensor& t) { return sum(tanh_act(t)); }, x));
    track(grad_check([&](const Tensor& t) { return sum(softplus(t)); }, x));
    track(grad_check([&](const Tensor& t) { return sum(compass::log(t)); }, pos));
    track(grad_check([&](const Tensor& t) { return sum(pow_const(t, 2.0)); }, pos));
    track(grad_check([&](const Tensor& t) { return sum(mul(softmax_lastdim(t), y)); }, x));
    track(grad_check([&](const Tensor& t) { return sum(scale(t, s)); }, x));
    track(grad_check([&](const Tensor& t) { return sum(add_rowvec(t, v)); }, x));
    Tensor xr = x.clone();
    nudge_away_from(xr, 0.0, 1e-3);
    track(grad_check([&](const Tensor& t) { return sum(relu(t)); }, xr));
    Tensor gain = rt({4}, 0.5, 1.5), bias = rt({4});
    track(grad_check([&](const Tensor& t) { return sum(mul(layer_norm(t, gain, bias), y)); }, x));

    // blocks
    BioCoupledFusion bcf = BioCoupledFusion::init(3, 2, 4, rng);
    Tensor xp = rt({4, 3}), xa = rt({4, 2}), ro = rt({4, 3});
    track(grad_check([&](const Tensor&) { return sum(mul(bcf.forward(xp, xa), ro)); }, bcf.gate.first.weight));
    DualGatedFusion dgf = DualGatedFusion::init(3, 4, rng);
    Tensor hs = rt({1, 3}), he = rt({1, 3}), r1 = rt({1, 3});
    track(grad_check([&](const Tensor&) { return sum(mul(dgf.forward(hs, he), r1)); }, dgf.gate_sub.first.weight));

    // losses
    Tensor logits = rt({4, 3}, -2.0, 2.0);
    Tensor labels = Tensor::zeros({4, 3});
    for (std::size_t i = 0; i < labels.size(); ++i) labels.data()[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
    LossParams lp = LossParams::init(0.3, -0.5);
    track(grad_check([&](const Tensor& t) { return hybrid_loss(t, labels, lp); }, logits));
  }

  if (full_graphs) {
    ModelConfig cfg;
    cfg.num_types = 3;
    cfg.d_model = 16;
    cfg.d_chem_embed = 4;
    cfg.heads = 2;
    cfg.encoder_layers = 1;
    cfg.prompt_layers = 1;
    cfg.fusion_hidden = 8;
    cfg.head_hidden = 8;
    cfg.stage2_dim = 16;
    cfg.stage2_hidden = 8;
    cfg.lora.rank = 4;
    cfg.lora.dropout = 0.0;
    cfg.prompt.dropout = 0.0;
    MspnModel model = MspnModel::init(cfg, seed);
    CrosstalkMatrix prior;
    prior.num_types = 3;
    prior.values = {0, 0.4, -0.2, 0.4, 0, 0.1, -0.2, 0.1, 0};
    model.set_crosstalk_prior(prior);
    for (auto& layer : model.protein_provider->layers())
      for (std::size_t i = 0; i < layer.q.up.size(); ++i) layer.q.up.data()[i] = rng.uniform(-0.2, 0.2);
    Tensor labels = Tensor::zeros({10, 3});
    for (std::size_t i = 0; i < labels.size(); ++i) labels.data()[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
    auto s1_loss = [&] {
      ForwardRngs r = ForwardRngs::at(0, 0);
      return hybrid_loss(model.forward("MKTAYWQRST", Mode::eval, r).logits, labels, model.loss_params);
    };
    track(grad_check([&](const Tensor&) { return s1_loss(); }, model.prompt_params.alpha));
    track(grad_check([&](const Tensor&) { return s1_loss(); }, model.prompt_params.proj_a));
    track(grad_check([&](const Tensor&) { return s1_loss(); }, model.head.out.weight));
    track(grad_check([&](const Tensor&) { return s1_loss(); }, model.blocks[0].q.weight));
    track(grad_check([&](const Tensor&) { return s1_loss(); }, model.protein_provider->layers()[0].q.down));
    track(grad_check([&](const Tensor&) { return s1_loss(); }, model.fusion.alpha));
    track(grad_check([&](const Tensor&) { return s1_loss(); }, model.loss_params.eta_raw));

    auto stage1 = std::make_shared<MspnModel>(std::move(model));
    EspsModel esps = EspsModel::init(stage1, seed + 1);
    Tensor hsub = esps.substrate_embedding("MKTAYWQRSTVNPLH");
    Tensor henz = esps.enzyme_embedding("ACDEFGHIKLMNPQRSTVWY");
    Tensor lab = Tensor::from({1, 1}, {1.0});
    auto s2_loss = [&] { return bce_loss(esps.score_from_embeddings(hsub, henz), lab); };
    track(grad_check([&](const Tensor&) { return s2_loss(); }, esps.fusion.gate_sub.first.weight));
    track(grad_check([&](const Tensor&) { return s2_loss(); }, esps.sub_proj.weight));
    track(grad_check([&](const Tensor&) { return s2_loss(); }, esps.head.second.weight));
    track(grad_check([&](const Tensor&) { return s2_loss(); }, esps.fusion.alpha2));
  }
  return worst;
}

// ---- shared evaluate helpers ----

json evaluate_site_files(const std::string& pred_path, const std::string& labels_path, const PtmTypeRegistry& reg,
                         double threshold) {
  const auto preds = predictions_from_tsv(detail::read_file(pred_path), reg);
  const auto labels = load_annotations_file(labels_path, reg);
  std::set<std::tuple<std::string, std::size_t, std::size_t>> truth;
  for (const auto& a : labels) truth.insert({a.protein_id, a.position, a.ptm_type});

  const std::size_t C = reg.size();
  std::vector<BinaryCounts> counts(C);
  std::vector<std::vector<double>> scores(C);
  std::vector<std::vector<int>> lab(C);
  for (const auto& p : preds) {
    const bool positive = truth.count({p.protein_id, p.position, p.ptm_type}) > 0;
    BinaryCounts& b = counts[p.ptm_type];
    const bool predicted = p.score > threshold;
    if (predicted && positive) ++b.tp;
    else if (predicted && !positive) ++b.fp;
    else if (!predicted && positive) ++b.fn;
    else ++b.tn;
    scores[p.ptm_type].push_back(p.score);
    lab[p.ptm_type].push_back(positive ? 1 : 0);
  }

  json per_type = json::object();
  std::vector<double> f1s(C, 0.0), mccs(C, 0.0), aurocs(C, 0.0), auprcs(C, 0.0);
  std::vector<std::size_t> support(C, 0), rank_support(C, 0);
  for (std::size_t c = 0; c < C; ++c) {
    support[c] = counts[c].tp + counts[c].fn;
    json entry;
    if (counts[c].total() > 0) {
      const ConfusionMetrics m = confusion_metrics(counts[c]);
      f1s[c] = m.f1;
      mccs[c] = m.mcc;
      entry = {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall},
               {"f1", m.f1},             {"mcc", m.mcc},             {"support", support[c]}};
      bool has_pos = false, has_neg = false;
      for (int l : lab[c]) (l ? has_pos : has_neg) = true;
      if (has_pos && has_neg) {
        aurocs[c] = auroc(scores[c], lab[c]);
        auprcs[c] = auprc(scores[c], lab[c]);
        rank_support[c] = support[c];
        entry["auroc"] = aurocs[c];
        entry["auprc"] = auprcs[c];
      }
    }
    per_type[reg.at(c).name] = entry;
  }
  json out;
  out["per_type"] = per_type;
  out["macro_f1"] = macro_average(f1s, support).value;
  out["macro_mcc"] = macro_average(mccs, support).value;
  bool any_rank = false;
  for (std::size_t c = 0; c < C; ++c) any_rank = any_rank || rank_support[c] > 0;
  if (any_rank) {
    out["macro_auroc"] = macro_average(aurocs, rank_support).value;
    out["macro_auprc"] = macro_average(auprcs, rank_support).value;
  }
  out["threshold"] = threshold;
  return out;
}

void print_metrics(const GlobalOpts& g, const json& metrics) {
  if (g.json_output) {
    std::cout << metrics.dump(2) << '\n';
    return;
  }
  for (const auto& [key, value] : metrics.items()) {
    if (value.is_number()) std::cout << key << ' ' << value.get<double>() << '\n';
  }
}

// ---- stage-2 split construction ----

void split_pairs(const std::vector<PairRow>& rows, const std::string& mode, std::uint64_t seed,
                 std::vector<PairSample>& train, std::vector<PairSample>& valid, std::vector<PairSample>& test) {
  auto push = [&](const PairRow& r, Split s) {
    if (s == Split::train) train.push_back(r.sample);
    else if (s == Split::valid) valid.push_back(r.sample);
    else test.push_back(r.sample);
  };
  if (mode == "warm") {
    Rng rng(seed, rng_stream::kSampling);
    for (const auto& r : rows) {
      const double u = rng.uniform();
      push(r, u < 0.8 ? Split::train : (u < 0.9 ? Split::valid : Split::test));
    }
  } else if (mode == "substrate-cold") {
    std::map<std::string, std::size_t> uniq;
    std::vector<ProteinRecord> peptides;
    for (const auto& r : rows)
      if (uniq.emplace(r.sample.substrate_peptide, uniq.size()).second)
        peptides.push_back({"pep" + std::to_string(peptides.size()), r.sample.substrate_peptide});
    SplitAssignment sa = cluster_split(peptides, 0.4, {0.8, 0.1, 0.1}, seed);
    for (const auto& r : rows) push(r, sa.of("pep" + std::to_string(uniq.at(r.sample.substrate_peptide))));
  } else if (mode == "enzyme-cold") {
    std::map<std::string, Split> by_enzyme;
    std::vector<std::string> ids;
    for (const auto& r : rows)
      if (!by_enzyme.count(r.sample.enzyme_id)) {
        by_enzyme[r.sample.enzyme_id] = Split::train;
        ids.push_back(r.sample.enzyme_id);
      }
    Rng rng(seed, rng_stream::kSampling);
    for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const double frac = static_cast<double>(i) / static_cast<double>(ids.size());
      by_enzyme[ids[i]] = frac < 0.8 ? Split::train : (frac < 0.9 ? Split::valid : Split::test);
    }
    for (const auto& r : rows) push(r, by_enzyme.at(r.sample.enzyme_id));
  } else {
    throw DataError("unknown split mode '" + mode + "' (expected warm|substrate-cold|enzyme-cold)");
  }
}

std::vector<PairRow> score_pairs(const EspsModel& model, EmbeddingCache& cache, const std::vector<PairSample>& pairs) {
  std::vector<PairRow> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    PairRow r;
    r.sample = p;
    r.score =
        model.score_from_embeddings(cache.substrate(p.substrate_peptide), cache.enzyme(p.enzyme_sequence)).value();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"PTM site profiling and enzyme-substrate pairing toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags are accepted after subcommand names
  GlobalOpts g;
  app.add_flag("--quiet", g.quiet, "suppress progress output");
  app.add_flag("--json", g.json_output, "print results as JSON");
  std::uint64_t seed_opt = 0;
  auto* seed_flag = app.add_option("--seed", seed_opt, "seed controlling all stochastic behavior");
  app.add_option("--config", g.config_path, "JSON config file");
  app.add_option("--set", g.overrides, "override a config key, e.g. --set train.lr=0.001");

  // data ---------------------------------------------------------------
  auto* data = app.add_subcommand("data", "corpus preparation");
  data->require_subcommand(1);

  auto* synth = data->add_subcommand("synth", "generate a synthetic corpus");
  std::string synth_spec, synth_out;
  synth->add_option("--spec", synth_spec, "corpus spec JSON")->required();
  synth->add_option("--out", synth_out, "output directory")->required();

  auto* segment = data->add_subcommand("segment", "cut annotated proteins into windows");
  std::string seg_fasta, seg_ann, seg_types, seg_out;
  std::size_t seg_maxlen = 50;
  segment->add_option("--fasta", seg_fasta)->required();
  segment->add_option("--annotations", seg_ann)->required();
  segment->add_option("--types", seg_types, "types JSON (default: the eight standard classes)");
  segment->add_option("--max-len", seg_maxlen);
  segment->add_option("--out", seg_out)->required();

  auto* splitc = data->add_subcommand("split", "similarity-aware train/valid/test split");
  std::string split_fasta, split_out;
  double split_threshold = 0.4;
  std::vector<double> split_ratios = {0.8, 0.1, 0.1};
  splitc->add_option("--fasta", split_fasta)->required();
  splitc->add_option("--threshold", split_threshold, "identity threshold");
  splitc->add_option("--ratios", split_ratios, "train valid test fractions")->expected(3);
  splitc->add_option("--out", split_out)->required();

  auto* windows = data->add_subcommand("windows", "centered peptide windows per annotation");
  std::string win_fasta, win_ann, win_types, win_out;
  std::size_t win_len = 15;
  windows->add_option("--fasta", win_fasta)->required();
  windows->add_option("--annotations", win_ann)->required();
  windows->add_option("--types", win_types);
  windows->add_option("--len", win_len);
  windows->add_option("--out", win_out)->required();

  // crosstalk ------------------------------------------------------------
  auto* crosstalk = app.add_subcommand("crosstalk", "pairwise class co-occurrence statistics");
  auto* ct_build = crosstalk->add_subcommand("build", "build the nPMI matrix from annotations");
  std::string ct_ann, ct_types, ct_out;
  ct_build->add_option("--annotations", ct_ann)->required();
  ct_build->add_option("--types", ct_types);
  ct_build->add_option("--out", ct_out)->required();

  // train ----------------------------------------------------------------
  auto* train = app.add_subcommand("train", "model training");
  train->require_subcommand(1);

  auto* t1 = train->add_subcommand("stage1", "train the site profiler");
  std::string t1_fasta, t1_ann, t1_split, t1_crosstalk, t1_out;
  t1->add_option("--fasta", t1_fasta)->required();
  t1->add_option("--annotations", t1_ann)->required();
  t1->add_option("--split", t1_split, "split TSV; omit to train on everything");
  t1->add_option("--crosstalk", t1_crosstalk, "precomputed crosstalk JSON; default: built from the train split");
  t1->add_option("--out-dir", t1_out)->required();

  auto* t2 = train->add_subcommand("stage2", "train the pairing head on a frozen stage-1");
  std::string t2_pairs, t2_enzymes, t2_ckpt, t2_out, t2_mode = "warm";
  bool t2_force = false;
  t2->add_option("--pairs", t2_pairs)->required();
  t2->add_option("--enzymes", t2_enzymes, "enzyme sequences fasta")->required();
  t2->add_option("--stage1", t2_ckpt, "stage-1 checkpoint")->required();
  t2->add_option("--split-mode", t2_mode, "warm|substrate-cold|enzyme-cold");
  t2->add_flag("--force", t2_force, "proceed on config hash mismatch");
  t2->add_option("--out-dir", t2_out)->required();

  // predict / evaluate -----------------------------------------------------
  auto* predict = app.add_subcommand("predict", "score candidate sites of whole proteins");
  std::string pr_ckpt, pr_fasta, pr_out;
  std::size_t pr_stride = 0;
  bool pr_force = false;
  predict->add_option("--checkpoint", pr_ckpt)->required();
  predict->add_option("--fasta", pr_fasta)->required();
  predict->add_option("--stride", pr_stride, "window stride (default: window length)");
  predict->add_flag("--force", pr_force);
  predict->add_option("--out", pr_out)->required();

  auto* evaluate = app.add_subcommand("evaluate", "metric computation");
  evaluate->require_subcommand(1);
  auto* ev_site = evaluate->add_subcommand("site", "site predictions vs annotations");
  std::string evs_pred, evs_labels, evs_types, evs_out;
  double evs_threshold = 0.5;
  ev_site->add_option("--pred", evs_pred)->required();
  ev_site->add_option("--labels", evs_labels)->required();
  ev_site->add_option("--types", evs_types);
  ev_site->add_option("--threshold", evs_threshold);
  ev_site->add_option("--out", evs_out, "metrics JSON output path");
  auto* ev_pair = evaluate->add_subcommand("pair", "scored enzyme/substrate pairs");
  std::string evp_pred, evp_types, evp_out;
  double evp_threshold = 0.5;
  ev_pair->add_option("--pred", evp_pred)->required();
  ev_pair->add_option("--types", evp_types);
  ev_pair->add_option("--threshold", evp_threshold);
  ev_pair->add_option("--out", evp_out);
  auto* ev_map = evaluate->add_subcommand("map", "mean average precision of ranking files");
  std::string evm_rankings, evm_out;
  ev_map->add_option("--rankings", evm_rankings)->required();
  ev_map->add_option("--out", evm_out);

  // analysis ----------------------------------------------------------------
  auto* veffect = app.add_subcommand("variant-effect", "probability change under a point substitution");
  std::string ve_ckpt, ve_fasta, ve_protein, ve_variant, ve_type, ve_out;
  std::size_t ve_site = 0, ve_window = 0;
  bool ve_force = false;
  veffect->add_option("--checkpoint", ve_ckpt)->required();
  veffect->add_option("--fasta", ve_fasta)->required();
  veffect->add_option("--protein", ve_protein)->required();
  veffect->add_option("--variant", ve_variant, "e.g. P616L")->required();
  veffect->add_option("--site", ve_site, "1-based modified position (default: the variant position)");
  veffect->add_option("--type", ve_type, "class name or index")->required();
  veffect->add_option("--window", ve_window, "scoring window length (odd)");
  veffect->add_flag("--force", ve_force);
  veffect->add_option("--out", ve_out, "TSV output path");

  auto* attribute = app.add_subcommand("attribute", "per-residue gradient-times-input attribution");
  std::string at_ckpt, at_fasta, at_protein, at_type, at_out;
  std::size_t at_pos = 0;
  bool at_force = false;
  attribute->add_option("--checkpoint", at_ckpt)->required();
  attribute->add_option("--fasta", at_fasta)->required();
  attribute->add_option("--protein", at_protein)->required();
  attribute->add_option("--position", at_pos)->required();
  attribute->add_option("--type", at_type)->required();
  attribute->add_flag("--force", at_force);
  attribute->add_option("--out", at_out)->required();

  auto* logo = app.add_subcommand("motif-logo", "residue frequency matrix of top predictions");
  std::string lg_pairs, lg_group, lg_types, lg_out;
  std::size_t lg_top = 100;
  double lg_threshold = 0.5;
  logo->add_option("--pairs", lg_pairs, "scored pairs TSV")->required();
  logo->add_option("--group", lg_group)->required();
  logo->add_option("--top", lg_top);
  logo->add_option("--threshold", lg_threshold);
  logo->add_option("--types", lg_types);
  logo->add_option("--out", lg_out)->required();

  auto* gradcheckc = app.add_subcommand("gradcheck", "finite-difference check of every operator and block");
  double gc_tol = 1e-4;
  bool gc_all = false;
  gradcheckc->add_flag("--all", gc_all, "include the full stage-1/stage-2 graphs");
  gradcheckc->add_option("--tol", gc_tol);

  auto* exportc = app.add_subcommand("export-embeddings", "write per-residue hidden states for external tools");
  std::string ex_ckpt, ex_fasta, ex_ann, ex_types, ex_out;
  bool ex_force = false;
  exportc->add_option("--checkpoint", ex_ckpt)->required();
  exportc->add_option("--fasta", ex_fasta)->required();
  exportc->add_option("--annotations", ex_ann, "restrict to segmentation windows of these annotations");
  exportc->add_option("--types", ex_types);
  exportc->add_flag("--force", ex_force);
  exportc->add_option("--out", ex_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage problems exit 1; --help exits 0
  }
  if (*seed_flag) g.seed = seed_opt;

  WallClock clock;
  try {
    auto registry_from = [&](const std::string& path) {
      return path.empty() ? PtmTypeRegistry::default_eight() : types_from_json(json::parse(detail::read_file(path)));
    };

    if (*synth) {
      CorpusSpec spec = corpus_spec_from_json(json::parse(detail::read_file(synth_spec)));
      ResolvedConfig rc = resolve_config(g);
      auto corpus = generate_synthetic_corpus(spec, rc.seed);
      fs::create_directories(synth_out);
      const std::string fasta_path = synth_out + "/proteins.fasta";
      const std::string ann_path = synth_out + "/annotations.tsv";
      const std::string enz_path = synth_out + "/enzymes.fasta";
      const std::string pairs_path = synth_out + "/pairs.tsv";
      const std::string types_path = synth_out + "/types.json";
      detail::write_file(fasta_path, to_fasta(corpus.records));
      detail::write_file(ann_path, annotations_to_tsv(corpus.annotations, corpus.registry));
      detail::write_file(enz_path, to_fasta(corpus.enzymes));
      std::vector<PairRow> rows;
      for (const auto& p : corpus.pairs) rows.push_back({p, -1.0});
      detail::write_file(pairs_path, pairs_to_tsv(rows, corpus.registry));
      detail::write_file(types_path, types_to_json(corpus.registry).dump(2) + "\n");
      if (corpus.orphans > 0)
        info(g, "warning: " + std::to_string(corpus.orphans) + " positives had no negative candidate");
      write_manifest(synth_out + "/manifest.json",
                     make_manifest("data synth", rc.seed, fnv1a64(detail::read_file(synth_spec)), {synth_spec},
                                   {fasta_path, ann_path, enz_path, pairs_path, types_path}, clock));
      info(g, "wrote " + std::to_string(corpus.records.size()) + " proteins, " +
                  std::to_string(corpus.annotations.size()) + " annotations, " + std::to_string(corpus.pairs.size()) +
                  " pairs to " + synth_out);
    } else if (*segment) {
      PtmTypeRegistry reg = registry_from(seg_types);
      auto records = load_fasta_file(seg_fasta);
      auto annotations = load_annotations_file(seg_ann, reg);
      auto by_protein = annotations_by_protein(annotations);
      std::ostringstream out;
      out << "# parent_id\twindow_start\twindow_end\tsequence\tn_sites\n";
      std::size_t count = 0;
      for (const auto& rec : records) {
        auto it = by_protein.find(rec.id);
        if (it == by_protein.end()) continue;
        for (const auto& s : greedy_segment(rec, it->second, reg, seg_maxlen)) {
          std::size_t n_sites = 0;
          for (const auto& rowv : s.labels)
            for (double v : rowv) n_sites += v > 0 ? 1 : 0;
          out << s.parent_id << '\t' << s.window_start << '\t' << s.window_start + s.length() - 1 << '\t'
              << s.sequence << '\t' << n_sites << '\n';
          ++count;
        }
      }
      detail::write_file(seg_out, out.str());
      write_manifest(seg_out + ".manifest.json",
                     make_manifest("data segment", 0, 0, {seg_fasta, seg_ann, seg_types}, {seg_out}, clock));
      info(g, "wrote " + std::to_string(count) + " windows to " + seg_out);
    } else if (*splitc) {
      ResolvedConfig rc = resolve_config(g);
      auto records = load_fasta_file(split_fasta);
      auto assignment = cluster_split(records, split_threshold, {split_ratios[0], split_ratios[1], split_ratios[2]},
                                      rc.seed);
      detail::write_file(split_out, split_to_tsv(assignment));
      write_manifest(split_out + ".manifest.json",
                     make_manifest("data split", rc.seed, 0, {split_fasta}, {split_out}, clock));
      info(g, "split " + std::to_string(records.size()) + " records " + std::to_string(assignment.counts[0]) + "/" +
                  std::to_string(assignment.counts[1]) + "/" + std::to_string(assignment.counts[2]));
    } else if (*windows) {
      PtmTypeRegistry reg = registry_from(win_types);
      auto records = load_fasta_file(win_fasta);
      auto annotations = load_annotations_file(win_ann, reg);
      std::map<std::string, const ProteinRecord*> by_id;
      for (const auto& r : records) by_id[r.id] = &r;
      std::ostringstream out;
      out << "# protein_id\tposition\tresidue\tptm_type\tpeptide\n";
      for (const auto& a : annotations) {
        auto it = by_id.find(a.protein_id);
        if (it == by_id.end()) throw DataError("annotation references unknown protein '" + a.protein_id + "'");
        out << a.protein_id << '\t' << a.position << '\t' << a.residue << '\t' << reg.at(a.ptm_type).name << '\t'
            << window_peptide(it->second->sequence, a.position, win_len) << '\n';
      }
      detail::write_file(win_out, out.str());
      write_manifest(win_out + ".manifest.json",
                     make_manifest("data windows", 0, 0, {win_fasta, win_ann}, {win_out}, clock));
    } else if (*ct_build) {
      PtmTypeRegistry reg = registry_from(ct_types);
      auto annotations = load_annotations_file(ct_ann, reg);
      CrosstalkMatrix m = npmi_matrix(build_cooccurrence(annotations, reg.size()));
      m.labels = reg.names();
      detail::write_file(ct_out, crosstalk_to_json(m).dump(2) + "\n");
      write_manifest(ct_out + ".manifest.json",
                     make_manifest("crosstalk build", 0, 0, {ct_ann, ct_types}, {ct_out}, clock));
      info(g, "wrote " + std::to_string(m.num_types) + "-class crosstalk matrix to " + ct_out);
    } else if (*t1) {
      ResolvedConfig rc = resolve_config(g);
      auto records = load_fasta_file(t1_fasta);
      auto annotations = load_annotations_file(t1_ann, rc.types);
      std::optional<SplitAssignment> splits;
      if (!t1_split.empty()) splits = split_from_tsv(detail::read_file(t1_split));
      auto train_set = build_samples(records, annotations, rc.types, rc.model.max_peptide_len,
                                     splits ? &*splits : nullptr, splits ? std::optional(Split::train) : std::nullopt);
      std::vector<PeptideSample> valid_set;
      if (splits)
        valid_set = build_samples(records, annotations, rc.types, rc.model.max_peptide_len, &*splits, Split::valid);

      CrosstalkMatrix prior;
      if (!t1_crosstalk.empty()) {
        prior = crosstalk_from_json(json::parse(detail::read_file(t1_crosstalk)));
      } else {
        std::vector<PtmAnnotation> train_ann;
        for (const auto& a : annotations)
          if (!splits || splits->of(a.protein_id) == Split::train) train_ann.push_back(a);
        prior = npmi_matrix(build_cooccurrence(train_ann, rc.types.size()));
        prior.labels = rc.types.names();
      }

      MspnModel model = MspnModel::init(rc.model, rc.seed);
      model.set_crosstalk_prior(prior);
      info(g, "training stage 1 on " + std::to_string(train_set.size()) + " windows (" +
                  std::to_string(valid_set.size()) + " validation)");
      Stage1TrainResult result = train_stage1(model, train_set, valid_set, rc.types, rc.train);

      fs::create_directories(t1_out);
      const std::string ckpt = t1_out + "/stage1.cptm";
      const std::string hist = t1_out + "/history.jsonl";
      const std::string cfg_path = t1_out + "/config.json";
      const std::string ct_path = t1_out + "/crosstalk.json";
      save_checkpoint(ckpt, config_hash(rc.model, rc.seed), model.params());
      std::ostringstream hj;
      for (const auto& e : result.history) {
        json row = {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_f1", e.val_f1}, {"val_mcc", e.val_mcc}};
        hj << row.dump() << '\n';
      }
      detail::write_file(hist, hj.str());
      write_resolved_config(cfg_path, rc);
      detail::write_file(ct_path, crosstalk_to_json(prior).dump(2) + "\n");
      write_manifest(t1_out + "/manifest.json",
                     make_manifest("train stage1", rc.seed, config_hash(rc.model, rc.seed),
                                   {t1_fasta, t1_ann, t1_split, t1_crosstalk, g.config_path},
                                   {ckpt, hist, cfg_path, ct_path}, clock));
      info(g, "best validation macro-F1 " + std::to_string(result.best_val_f1) + " at epoch " +
                  std::to_string(result.best_epoch));
    } else if (*t2) {
      ResolvedConfig rc = resolve_config(g);
      auto rows = pairs_from_tsv(detail::read_file(t2_pairs), rc.types);
      std::map<std::string, std::string> enzyme_seq;
      for (const auto& e : load_fasta_file(t2_enzymes)) enzyme_seq[e.id] = e.sequence;
      for (auto& r : rows) {
        auto it = enzyme_seq.find(r.sample.enzyme_id);
        if (it == enzyme_seq.end()) throw DataError("pair references unknown enzyme '" + r.sample.enzyme_id + "'");
        r.sample.enzyme_sequence = it->second;
      }
      std::vector<PairSample> train_pairs, valid_pairs, test_pairs;
      split_pairs(rows, t2_mode, rc.seed, train_pairs, valid_pairs, test_pairs);

      auto stage1 = std::make_shared<MspnModel>(load_stage1(t2_ckpt, rc, t2_force, g));
      EspsModel model = EspsModel::init(stage1, rc.seed);
      info(g, "training stage 2 (" + t2_mode + ") on " + std::to_string(train_pairs.size()) + " pairs (" +
                  std::to_string(valid_pairs.size()) + " validation, " + std::to_string(test_pairs.size()) +
                  " test)");
      Stage2TrainResult result = train_stage2(model, train_pairs, valid_pairs, rc.train);

      fs::create_directories(t2_out);
      const std::string ckpt = t2_out + "/stage2.cptm";
      const std::string hist = t2_out + "/history.jsonl";
      save_checkpoint(ckpt, config_hash(rc.model, rc.seed), model.params());
      std::ostringstream hj;
      for (const auto& e : result.history) {
        json row = {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_auroc", e.val_auroc}};
        hj << row.dump() << '\n';
      }
      detail::write_file(hist, hj.str());
      EmbeddingCache cache(model);
      std::vector<std::string> artifacts = {ckpt, hist};
      for (const auto& [name, pairs] : {std::pair{std::string("valid"), &valid_pairs},
                                        std::pair{std::string("test"), &test_pairs}}) {
        if (pairs->empty()) continue;
        const std::string path = t2_out + "/" + name + "_scored.tsv";
        detail::write_file(path, pairs_to_tsv(score_pairs(model, cache, *pairs), rc.types));
        artifacts.push_back(path);
      }
      write_manifest(t2_out + "/manifest.json",
                     make_manifest("train stage2", rc.seed, config_hash(rc.model, rc.seed),
                                   {t2_pairs, t2_ckpt, g.config_path}, artifacts, clock));
      info(g, "best validation AUROC " + std::to_string(result.best_val_auroc) + " at epoch " +
                  std::to_string(result.best_epoch));
    } else if (*predict) {
      ResolvedConfig rc = resolve_config(g);
      MspnModel model = load_stage1(pr_ckpt, rc, pr_force, g);
      auto records = load_fasta_file(pr_fasta);
      auto preds = predict_sites(model, records, rc.types, pr_stride);
      detail::write_file(pr_out, predictions_to_tsv(preds, rc.types));
      write_manifest(pr_out + ".manifest.json",
                     make_manifest("predict", rc.seed, config_hash(rc.model, rc.seed),
                                   {pr_ckpt, pr_fasta, g.config_path}, {pr_out}, clock));
      info(g, "scored " + std::to_string(preds.size()) + " candidate sites");
    } else if (*ev_site) {
      ResolvedConfig rc = resolve_config(g);
      PtmTypeRegistry reg = evs_types.empty() ? rc.types : registry_from(evs_types);
      json metrics = evaluate_site_files(evs_pred, evs_labels, reg, evs_threshold);
      print_metrics(g, metrics);
      if (!evs_out.empty()) {
        detail::write_file(evs_out, metrics.dump(2) + "\n");
        write_manifest(evs_out + ".manifest.json",
                       make_manifest("evaluate site", 0, 0, {evs_pred, evs_labels}, {evs_out}, clock));
      }
    } else if (*ev_pair) {
      ResolvedConfig rc = resolve_config(g);
      PtmTypeRegistry reg = evp_types.empty() ? rc.types : registry_from(evp_types);
      auto rows = pairs_from_tsv(detail::read_file(evp_pred), reg);
      std::vector<double> scores;
      std::vector<int> labels;
      BinaryCounts counts;
      for (const auto& r : rows) {
        if (r.score < 0) throw DataError("evaluate pair: unscored row in '" + evp_pred + "'");
        scores.push_back(r.score);
        labels.push_back(r.sample.label);
        const bool predicted = r.score > evp_threshold;
        if (predicted && r.sample.label) ++counts.tp;
        else if (predicted) ++counts.fp;
        else if (r.sample.label) ++counts.fn;
        else ++counts.tn;
      }
      const ConfusionMetrics cm = confusion_metrics(counts);
      json metrics = {{"auroc", auroc(scores, labels)}, {"auprc", auprc(scores, labels)}, {"accuracy", cm.accuracy},
                      {"precision", cm.precision},      {"recall", cm.recall},            {"f1", cm.f1},
                      {"mcc", cm.mcc},                  {"threshold", evp_threshold}};
      print_metrics(g, metrics);
      if (!evp_out.empty()) {
        detail::write_file(evp_out, metrics.dump(2) + "\n");
        write_manifest(evp_out + ".manifest.json",
                       make_manifest("evaluate pair", 0, 0, {evp_pred}, {evp_out}, clock));
      }
    } else if (*ev_map) {
      auto rows = rankings_from_tsv(detail::read_file(evm_rankings));
      std::map<std::string, RankedList> queries;
      for (const auto& r : rows) {
        RankedList& q = queries[r.query_id];
        q.query_id = r.query_id;
        q.candidates.push_back({r.candidate_id, r.score, r.relevance != 0});
      }
      std::vector<RankedList> list;
      for (auto& [id, q] : queries) list.push_back(std::move(q));
      json metrics = {{"map", mean_average_precision(list)}, {"queries", list.size()}};
      print_metrics(g, metrics);
      if (!evm_out.empty()) {
        detail::write_file(evm_out, metrics.dump(2) + "\n");
        write_manifest(evm_out + ".manifest.json",
                       make_manifest("evaluate map", 0, 0, {evm_rankings}, {evm_out}, clock));
      }
    } else if (*veffect) {
      ResolvedConfig rc = resolve_config(g);
      MspnModel model = load_stage1(ve_ckpt, rc, ve_force, g);
      auto records = load_fasta_file(ve_fasta);
      const ProteinRecord* rec = nullptr;
      for (const auto& r : records)
        if (r.id == ve_protein) rec = &r;
      if (!rec) throw DataError("protein '" + ve_protein + "' not in fasta");
      const Mutation mut = parse_mutation(ve_variant);
      const std::size_t site = ve_site == 0 ? mut.position : ve_site;
      const std::size_t type_idx = std::isdigit(static_cast<unsigned char>(ve_type[0]))
                                       ? std::stoull(ve_type)
                                       : rc.types.index_of(ve_type);
      const VariantDelta d = variant_delta(model, *rec, mut, site, type_idx, ve_window);
      std::ostringstream row;
      row << "# protein_id\twt\tposition\tvariant\tmod_position\tptm_type\twt_prob\tmt_prob\tdiff\n";
      row.precision(17);
      row << rec->id << '\t' << mut.ref << '\t' << mut.position << '\t' << mut.alt << '\t' << site << '\t'
          << rc.types.at(type_idx).name << '\t' << d.wt_prob << '\t' << d.mt_prob << '\t' << d.diff << '\n';
      if (g.json_output) {
        json out = {{"protein_id", rec->id},    {"wt", std::string(1, mut.ref)},
                    {"position", mut.position}, {"variant", std::string(1, mut.alt)},
                    {"mod_position", site},     {"ptm_type", rc.types.at(type_idx).name},
                    {"wt_prob", d.wt_prob},     {"mt_prob", d.mt_prob},
                    {"diff", d.diff}};
        std::cout << out.dump(2) << '\n';
      } else {
        std::cout << row.str();
      }
      if (!ve_out.empty()) {
        detail::write_file(ve_out, row.str());
        write_manifest(ve_out + ".manifest.json",
                       make_manifest("variant-effect", rc.seed, config_hash(rc.model, rc.seed),
                                     {ve_ckpt, ve_fasta, g.config_path}, {ve_out}, clock));
      }
    } else if (*attribute) {
      ResolvedConfig rc = resolve_config(g);
      MspnModel model = load_stage1(at_ckpt, rc, at_force, g);
      auto records = load_fasta_file(at_fasta);
      const ProteinRecord* rec = nullptr;
      for (const auto& r : records)
        if (r.id == at_protein) rec = &r;
      if (!rec) throw DataError("protein '" + at_protein + "' not in fasta");
      std::size_t window_len = rc.model.max_peptide_len;
      if (window_len % 2 == 0) --window_len;
      const std::string window = window_peptide(rec->sequence, at_pos, window_len);
      const std::size_t center = (window_len - 1) / 2;
      const std::size_t type_idx = std::isdigit(static_cast<unsigned char>(at_type[0]))
                                       ? std::stoull(at_type)
                                       : rc.types.index_of(at_type);
      auto scores = input_gradient_attribution(model, window, center + 1, type_idx);
      std::ostringstream out;
      out << "# position\tresidue\tscore\n";
      out.precision(17);
      for (std::size_t i = 0; i < window.size(); ++i) {
        const long long abs_pos = static_cast<long long>(at_pos) - static_cast<long long>(center) +
                                  static_cast<long long>(i);
        if (window[i] == kPadResidue) continue;
        out << abs_pos << '\t' << window[i] << '\t' << scores[i] << '\n';
      }
      detail::write_file(at_out, out.str());
      write_manifest(at_out + ".manifest.json",
                     make_manifest("attribute", rc.seed, config_hash(rc.model, rc.seed),
                                   {at_ckpt, at_fasta, g.config_path}, {at_out}, clock));
    } else if (*logo) {
      ResolvedConfig rc = resolve_config(g);
      PtmTypeRegistry reg = lg_types.empty() ? rc.types : registry_from(lg_types);
      auto rows = pairs_from_tsv(detail::read_file(lg_pairs), reg);
      MotifLogo ml = motif_logo(rows, lg_group, lg_top, lg_threshold);
      std::ostringstream out;
      out << "# offset";
      for (char r : kAminoAcids) out << '\t' << r;
      out << '\n';
      out.precision(17);
      const long long center = static_cast<long long>((ml.peptide_length - 1) / 2);
      for (std::size_t i = 0; i < ml.peptide_length; ++i) {
        out << (static_cast<long long>(i) - center);
        for (double f : ml.frequencies[i]) out << '\t' << f;
        out << '\n';
      }
      detail::write_file(lg_out, out.str());
      write_manifest(lg_out + ".manifest.json",
                     make_manifest("motif-logo", 0, 0, {lg_pairs}, {lg_out}, clock));
      info(g, "logo built from " + std::to_string(ml.peptides_used) + " peptides");
    } else if (*gradcheckc) {
      ResolvedConfig rc = resolve_config(g);
      const double worst = gradcheck_battery(rc.seed, gc_all);
      json metrics = {{"max_rel_err", worst}, {"tol", gc_tol}};
      print_metrics(g, metrics);
      if (worst >= gc_tol) {
        std::cerr << "gradcheck failed: " << worst << " >= " << gc_tol << '\n';
        return 3;
      }
    } else if (*exportc) {
      ResolvedConfig rc = resolve_config(g);
      MspnModel model = load_stage1(ex_ckpt, rc, ex_force, g);
      auto records = load_fasta_file(ex_fasta);
      std::vector<std::pair<std::string, std::vector<double>>> entries;
      std::set<std::string> seen;
      auto add_window = [&](const std::string& seq) {
        if (!seen.insert(seq).second) return;
        ForwardRngs rngs = ForwardRngs::at(0, 0);
        MspnTrace trace = model.forward(seq, Mode::eval, rngs);
        entries.emplace_back(seq, trace.final_hidden.vec());
      };
      if (!ex_ann.empty()) {
        auto annotations = load_annotations_file(ex_ann, rc.types);
        auto by_protein = annotations_by_protein(annotations);
        for (const auto& rec : records) {
          auto it = by_protein.find(rec.id);
          if (it == by_protein.end()) continue;
          for (const auto& s : greedy_segment(rec, it->second, rc.types, rc.model.max_peptide_len))
            add_window(s.sequence);
        }
      } else {
        for (const auto& rec : records) {
          const std::size_t L = rec.sequence.size();
          const std::size_t max_len = rc.model.max_peptide_len;
          for (std::size_t s = 1; s == 1 || s + max_len - 1 <= L; s += max_len) {
            add_window(rec.sequence.substr(s - 1, std::min(max_len, L - s + 1)));
            if (s + max_len - 1 >= L) break;
          }
        }
      }
      FileBackedProvider::save(ex_out, model.cfg.d_model, entries);
      write_manifest(ex_out + ".manifest.json",
                     make_manifest("export-embeddings", rc.seed, config_hash(rc.model, rc.seed),
                                   {ex_ckpt, ex_fasta, ex_ann, g.config_path}, {ex_out}, clock));
      info(g, "exported " + std::to_string(entries.size()) + " windows");
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

int main(int argc, char** argv) { return cli_main(argc, argv); }
