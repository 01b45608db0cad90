#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "compass/core/gradcheck.hpp"
#include "compass/data/synthetic.hpp"
#include "compass/model/train.hpp"
#include "support/test_util.hpp"

using namespace compass;
using testutil::bitwise_equal;

namespace {

ModelConfig tiny_config(std::size_t num_types = 3) {
  ModelConfig cfg;
  cfg.num_types = num_types;
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
  cfg.max_peptide_len = 30;
  return cfg;
}

CrosstalkMatrix random_prior(std::size_t c, std::uint64_t seed) {
  Rng rng(seed, 1);
  CrosstalkMatrix m;
  m.num_types = c;
  m.values.assign(c * c, 0.0);
  for (std::size_t a = 0; a < c; ++a)
    for (std::size_t b = a + 1; b < c; ++b) {
      const double v = rng.uniform(-1.0, 1.0);
      m.at(a, b) = v;
      m.at(b, a) = v;
    }
  return m;
}

std::string tmp_path(const std::string& name) { return "/tmp/compass_test_" + name; }

}  // namespace

TEST_CASE("embed_physchem") {
  SECTION("pad residue maps to zeros") {
    Tensor x = embed_physchem('X');
    for (std::size_t i = 0; i < 4; ++i) REQUIRE(x.at(i) == 0.0);
  }
  SECTION("glycine matches an independent z-score of the raw table") {
    const auto& raw = physchem_raw();
    const std::size_t g = residue_index('G');
    Tensor got = embed_physchem('G');
    for (std::size_t col = 0; col < 4; ++col) {
      double mean = 0.0;
      for (const auto& row : raw) mean += row[col];
      mean /= 20.0;
      double var = 0.0;
      for (const auto& row : raw) var += (row[col] - mean) * (row[col] - mean);
      const double sd = std::sqrt(var / 20.0);
      REQUIRE_THAT(got.at(col), Catch::Matchers::WithinAbs((raw[g][col] - mean) / sd, 1e-12));
    }
  }
  SECTION("normalized columns have zero mean over the 20 residues") {
    for (std::size_t col = 0; col < 4; ++col) {
      double mean = 0.0;
      for (char r : kAminoAcids) mean += embed_physchem(r).at(col);
      REQUIRE_THAT(mean / 20.0, Catch::Matchers::WithinAbs(0.0, 1e-12));
    }
  }
  SECTION("unknown letter rejected") {
    REQUIRE_THROWS_AS(embed_physchem('B'), DataError);
  }
}

TEST_CASE("mspn forward") {
  ModelConfig cfg = tiny_config();
  MspnModel model = MspnModel::init(cfg, 11);
  model.set_crosstalk_prior(random_prior(3, 5));
  const std::string seq = "MKTAYWQRSTVNPLHE";

  SECTION("probabilities lie strictly inside (0,1)") {
    ForwardRngs rngs = ForwardRngs::at(0, 0);
    MspnTrace trace = model.forward(seq, Mode::eval, rngs);
    REQUIRE(trace.probs.rows() == seq.size());
    REQUIRE(trace.probs.cols() == 3);
    for (std::size_t i = 0; i < trace.probs.size(); ++i) {
      REQUIRE(trace.probs.at(i) > 0.0);
      REQUIRE(trace.probs.at(i) < 1.0);
    }
  }
  SECTION("deterministic in eval mode") {
    ForwardRngs r1 = ForwardRngs::at(1, 1), r2 = ForwardRngs::at(2, 2);
    REQUIRE(bitwise_equal(model.forward(seq, Mode::eval, r1).probs, model.forward(seq, Mode::eval, r2).probs));
  }
  SECTION("over-length sequences rejected") {
    std::string longseq(cfg.max_peptide_len + 1, 'A');
    ForwardRngs rngs = ForwardRngs::at(0, 0);
    REQUIRE_THROWS_AS(model.forward(longseq, Mode::eval, rngs), DataError);
  }
  SECTION("prompt disabled equals zero prompt gain, bitwise, across modes") {
    MspnModel off = MspnModel::init(cfg, 11);
    off.set_crosstalk_prior(random_prior(3, 5));
    off.prompt_enabled = false;
    MspnModel zeroed = MspnModel::init(cfg, 11);
    zeroed.set_crosstalk_prior(random_prior(3, 5));
    zeroed.prompt_params.alpha.data()[0] = 0.0;
    Rng seq_rng(3, 1);
    for (int trial = 0; trial < 50; ++trial) {
      std::string s;
      const std::size_t len = 5 + seq_rng.below(20);
      for (std::size_t i = 0; i < len; ++i) s.push_back(kAminoAcids[seq_rng.below(20)]);
      const Mode mode = trial % 4 == 0 ? Mode::train : Mode::eval;
      ForwardRngs r1 = ForwardRngs::at(9, trial), r2 = ForwardRngs::at(9, trial);
      REQUIRE(bitwise_equal(off.forward(s, mode, r1).probs, zeroed.forward(s, mode, r2).probs));
    }
  }
  SECTION("adapters disabled equals fresh zero adapters, bitwise") {
    // freshly initialized adapters have zero up-projections, so the delta
    // path contributes exactly nothing
    MspnModel on = MspnModel::init(cfg, 11);
    on.set_crosstalk_prior(random_prior(3, 5));
    MspnModel off = MspnModel::init(cfg, 11);
    off.set_crosstalk_prior(random_prior(3, 5));
    off.lora_enabled = false;
    off.protein_provider->set_adapters_enabled(false);
    Rng seq_rng(4, 1);
    for (int trial = 0; trial < 50; ++trial) {
      std::string s;
      const std::size_t len = 5 + seq_rng.below(20);
      for (std::size_t i = 0; i < len; ++i) s.push_back(kAminoAcids[seq_rng.below(20)]);
      ForwardRngs r1 = ForwardRngs::at(9, trial), r2 = ForwardRngs::at(9, trial);
      REQUIRE(bitwise_equal(on.forward(s, Mode::eval, r1).probs, off.forward(s, Mode::eval, r2).probs));
    }
  }
  SECTION("prompt-disabled output is independent of the prior") {
    MspnModel m1 = MspnModel::init(cfg, 11);
    m1.set_crosstalk_prior(random_prior(3, 5));
    m1.prompt_enabled = false;
    MspnModel m2 = MspnModel::init(cfg, 11);
    m2.set_crosstalk_prior(random_prior(3, 999));  // different prior
    m2.prompt_enabled = false;
    ForwardRngs r1 = ForwardRngs::at(0, 0), r2 = ForwardRngs::at(0, 0);
    REQUIRE(bitwise_equal(m1.forward(seq, Mode::eval, r1).probs, m2.forward(seq, Mode::eval, r2).probs));
  }
  SECTION("pad rows are excluded from the loss and zero in the hidden state") {
    ForwardRngs rngs = ForwardRngs::at(0, 0);
    MspnTrace trace = model.forward("XXMKTAYWQRSTVNX", Mode::eval, rngs);
    for (std::size_t j = 0; j < trace.final_hidden.cols(); ++j) {
      REQUIRE(trace.final_hidden.at(0, j) == 0.0);
      REQUIRE(trace.final_hidden.at(14, j) == 0.0);
    }
    Tensor gathered = gather_real_rows(trace.logits, trace.mask);
    REQUIRE(gathered.rows() == 12);
  }
}

TEST_CASE("full model gradients") {
  ModelConfig cfg = tiny_config();
  cfg.prompt.dropout = 0.0;
  cfg.lora.dropout = 0.0;
  MspnModel model = MspnModel::init(cfg, 21);
  model.set_crosstalk_prior(random_prior(3, 7));
  // a live adapter so the low-rank path carries gradient
  for (auto& layer : model.protein_provider->layers()) {
    Rng r(5, 1);
    for (std::size_t i = 0; i < layer.q.up.size(); ++i) layer.q.up.data()[i] = r.uniform(-0.2, 0.2);
  }

  std::vector<std::string> seqs = {"MKTAYWQRST", "ACDEFGHIKL"};
  Tensor labels = Tensor::zeros({20, 3});
  Rng lr(3, 1);
  for (std::size_t i = 0; i < labels.size(); ++i) labels.data()[i] = lr.uniform() < 0.3 ? 1.0 : 0.0;

  auto loss_fn = [&] {
    ForwardRngs r1 = ForwardRngs::at(0, 0), r2 = ForwardRngs::at(0, 1);
    Tensor l1 = model.forward(seqs[0], Mode::eval, r1).logits;
    Tensor l2 = model.forward(seqs[1], Mode::eval, r2).logits;
    return hybrid_loss(concat_rows(l1, l2), labels, model.loss_params);
  };

  CHECK(grad_check([&](const Tensor&) { return loss_fn(); }, model.prompt_params.alpha) < 1e-4);
  CHECK(grad_check([&](const Tensor&) { return loss_fn(); }, model.prompt_params.proj_a) < 1e-4);
  CHECK(grad_check([&](const Tensor&) { return loss_fn(); }, model.fusion.alpha) < 1e-4);
  CHECK(grad_check([&](const Tensor&) { return loss_fn(); }, model.head.out.weight) < 1e-4);
  CHECK(grad_check([&](const Tensor&) { return loss_fn(); }, model.blocks[0].predictor.weight) < 1e-4);
  CHECK(grad_check([&](const Tensor&) { return loss_fn(); }, model.protein_provider->layers()[0].q.down) < 1e-4);
  CHECK(grad_check([&](const Tensor&) { return loss_fn(); }, model.loss_params.eta_raw) < 1e-4);
  CHECK(grad_check([&](const Tensor&) { return loss_fn(); }, model.loss_params.omega_raw) < 1e-4);
}

TEST_CASE("esps forward") {
  ModelConfig cfg = tiny_config();
  auto stage1 = std::make_shared<MspnModel>(MspnModel::init(cfg, 31));
  stage1->set_crosstalk_prior(random_prior(3, 9));
  EspsModel esps = EspsModel::init(stage1, 32);
  const std::string peptide = "MKTAYWQRSTVNPLH";  // 15
  const std::string enzyme = "ACDEFGHIKLMNPQRSTVWYACDEFGHIKLMNPQRSTVWY";

  SECTION("identical calls give identical scalars") {
    REQUIRE(esps.forward(peptide, enzyme) == esps.forward(peptide, enzyme));
  }
  SECTION("output is a probability") {
    const double p = esps.forward(peptide, enzyme);
    REQUIRE(p > 0.0);
    REQUIRE(p < 1.0);
  }
  SECTION("malformed substrate rejected") {
    REQUIRE_THROWS_AS(esps_forward(esps, "SHORT", 2, enzyme), DataError);
    REQUIRE_THROWS_AS(esps_forward(esps, peptide, 3, enzyme), DataError);
    REQUIRE(esps_forward(esps, peptide, 7, enzyme) == esps.forward(peptide, enzyme));
  }
  SECTION("all-pad substrate reduces to the zero-embedding path") {
    const std::string allx(15, 'X');
    const double via_forward = esps.forward(allx, enzyme);
    const double via_zero =
        esps.score_from_embeddings(Tensor::zeros({1, cfg.d_model}), esps.enzyme_embedding(enzyme)).value();
    REQUIRE(via_forward == via_zero);
  }
  SECTION("enzyme truncation bounds the pooled length") {
    EspsModel trunc = EspsModel::init(stage1, 32);
    trunc.cfg.enzyme_truncate = 20;
    Tensor full = trunc.enzyme_embedding(enzyme);
    Tensor cut = trunc.enzyme_embedding(enzyme.substr(0, 20));
    REQUIRE(bitwise_equal(full, cut));
  }
}

TEST_CASE("checkpoint round trip") {
  ModelConfig cfg = tiny_config();
  MspnModel model = MspnModel::init(cfg, 77);
  model.set_crosstalk_prior(random_prior(3, 3));
  const std::string path = tmp_path("ckpt.bin");
  const std::uint64_t hash = config_hash(cfg, 77);
  save_checkpoint(path, hash, model.params());

  SECTION("load restores forward outputs bitwise") {
    ForwardRngs r1 = ForwardRngs::at(0, 0);
    Tensor before = model.forward("MKTAYWQRST", Mode::eval, r1).probs;
    MspnModel other = MspnModel::init(cfg, 9999);  // different random init
    Checkpoint ck = load_checkpoint(path);
    REQUIRE(ck.config_hash == hash);
    ParamRegistry reg = other.params();
    restore_params(ck, reg);
    ForwardRngs r2 = ForwardRngs::at(0, 0);
    Tensor after = other.forward("MKTAYWQRST", Mode::eval, r2).probs;
    REQUIRE(bitwise_equal(before, after));
  }
  SECTION("truncated file rejected") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string cut = tmp_path("ckpt_cut.bin");
    std::ofstream out(cut, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    REQUIRE_THROWS_AS(load_checkpoint(cut), DataError);
  }
  SECTION("foreign magic rejected") {
    const std::string bad = tmp_path("ckpt_bad.bin");
    std::ofstream out(bad, std::ios::binary);
    out << "NOPEnonsense";
    out.close();
    REQUIRE_THROWS_AS(load_checkpoint(bad), DataError);
  }
}

namespace {

// 64-peptide planted-motif corpus for training smoke tests.
std::pair<std::vector<PeptideSample>, PtmTypeRegistry> tiny_training_set() {
  CorpusSpec spec;
  spec.num_proteins = 64;
  spec.min_len = 18;
  spec.max_len = 26;
  spec.types = {{"phos_like", "STY", "RRxS", 3, 1.0, 0.0}, {"acet_like", "K", "KKxK", 0, 1.0, 0.0},
                {"glyc_like", "N", "NxT", 0, 1.0, 0.0}};
  auto corpus = generate_synthetic_corpus(spec, 2024);
  std::vector<PeptideSample> samples;
  for (const auto& rec : corpus.records) {
    std::vector<PtmAnnotation> anns;
    for (const auto& a : corpus.annotations)
      if (a.protein_id == rec.id) anns.push_back(a);
    for (auto& s : greedy_segment(rec, anns, corpus.registry, 30)) samples.push_back(std::move(s));
  }
  return {samples, corpus.registry};
}

}  // namespace

TEST_CASE("stage 1 training") {
  auto [samples, registry] = tiny_training_set();
  REQUIRE(samples.size() >= 64);
  samples.resize(64);

  ModelConfig cfg = tiny_config(3);
  cfg.prompt.dropout = 0.0;
  cfg.lora.dropout = 0.0;

  SECTION("loss decreases over 200 steps on planted motifs") {
    MspnModel model = MspnModel::init(cfg, 5);
    model.set_crosstalk_prior(npmi_matrix(build_cooccurrence({{"p", 1, 'S', 0}}, 3)));
    TrainConfig tc;
    tc.lr = 3e-3;
    tc.batch_size = 4;   // 16 steps per epoch
    tc.max_epochs = 13;  // ~208 steps
    tc.seed = 5;
    Stage1TrainResult result = train_stage1(model, samples, {}, registry, tc);
    REQUIRE(result.history.size() >= 2);
    REQUIRE(result.history.back().train_loss < result.history.front().train_loss);
  }
  SECTION("zero learning rate leaves parameters and loss untouched") {
    MspnModel model = MspnModel::init(cfg, 6);
    TrainConfig tc;
    tc.lr = 0.0;
    tc.batch_size = samples.size();  // one batch per epoch: loss comparable across epochs
    tc.max_epochs = 3;
    tc.patience = 10;
    tc.seed = 6;
    ParamRegistry reg = model.params();
    std::vector<Tensor> before = snapshot_params(reg);
    Stage1TrainResult result = train_stage1(model, samples, {}, registry, tc);
    for (std::size_t i = 0; i < before.size(); ++i)
      REQUIRE(bitwise_equal(before[i], reg.items()[i].second));
    for (const auto& e : result.history)
      REQUIRE_THAT(e.train_loss, Catch::Matchers::WithinAbs(result.history[0].train_loss, 1e-12));
  }
  SECTION("fixed seed reproduces the loss trajectory bitwise") {
    auto run = [&](std::uint64_t seed) {
      MspnModel model = MspnModel::init(cfg, seed);
      TrainConfig tc;
      tc.lr = 1e-3;
      tc.batch_size = 16;
      tc.max_epochs = 3;
      tc.seed = seed;
      Stage1TrainResult r = train_stage1(model, samples, {}, registry, tc);
      std::vector<double> losses;
      for (const auto& e : r.history) losses.push_back(e.train_loss);
      return losses;
    };
    REQUIRE(run(9) == run(9));
    REQUIRE(run(9) != run(10));
  }
  SECTION("empty training split rejected") {
    MspnModel model = MspnModel::init(cfg, 7);
    TrainConfig tc;
    REQUIRE_THROWS_AS(train_stage1(model, {}, samples, registry, tc), DataError);
  }
}

TEST_CASE("stage 2 training freeze contract") {
  CorpusSpec spec;
  spec.num_proteins = 40;
  spec.min_len = 20;
  spec.max_len = 30;
  spec.types = {{"phos_like", "STY", "", 0, 0.0, 0.0}};
  spec.families = {{"fam_a", 0, "RRxS", 3, 2, 1.0}, {"fam_b", 0, "PxSP", 2, 2, 1.0}};
  spec.pairs_per_enzyme = 10;
  auto corpus = generate_synthetic_corpus(spec, 77);
  REQUIRE(corpus.pairs.size() > 20);

  ModelConfig cfg = tiny_config(1);
  auto stage1 = std::make_shared<MspnModel>(MspnModel::init(cfg, 41));
  EspsModel esps = EspsModel::init(stage1, 42);

  ParamRegistry s1_reg = stage1->params();
  std::vector<Tensor> s1_before = snapshot_params(s1_reg);

  TrainConfig tc;
  tc.lr = 1e-2;
  tc.batch_size = 16;
  tc.max_epochs = 2;
  tc.seed = 3;
  Stage2TrainResult result = train_stage2(esps, corpus.pairs, corpus.pairs, tc);
  REQUIRE(result.history.size() == 2);

  // stage-1 delta is exactly zero, bitwise
  double delta = 0.0;
  for (std::size_t i = 0; i < s1_before.size(); ++i) {
    const Tensor& now = s1_reg.items()[i].second;
    for (std::size_t j = 0; j < now.size(); ++j)
      delta += std::abs(now.data()[j] - s1_before[i].data()[j]);
  }
  REQUIRE(delta == 0.0);
}
