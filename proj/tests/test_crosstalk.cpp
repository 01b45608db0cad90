#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "compass/crosstalk/crosstalk.hpp"
#include "compass/crosstalk/prompt.hpp"
#include "support/test_util.hpp"

using namespace compass;
using testutil::bitwise_equal;
using testutil::random_tensor;

namespace {

std::vector<PtmAnnotation> three_site_example() {
  // site 1 carries {A,B}, site 2 {A}, site 3 {B}
  return {
      {"p1", 10, 'S', 0}, {"p1", 10, 'S', 1},  // co-occurring site
      {"p1", 20, 'S', 0},
      {"p2", 5, 'S', 1},
  };
}

}  // namespace

TEST_CASE("build_cooccurrence") {
  SECTION("hand count") {
    auto counts = build_cooccurrence(three_site_example(), 2);
    REQUIRE(counts.total_sites == 3);
    REQUIRE(counts.joint[0][1] == 1);
    REQUIRE(counts.joint[1][0] == 1);
    REQUIRE(counts.marginal[0] == 2);
    REQUIRE(counts.marginal[1] == 2);
    REQUIRE(counts.joint[0][0] == 0);
    REQUIRE(counts.joint[1][1] == 0);
  }
  SECTION("empty input") {
    auto counts = build_cooccurrence({}, 3);
    REQUIRE(counts.total_sites == 0);
    for (std::size_t c = 0; c < 3; ++c) REQUIRE(counts.marginal[c] == 0);
  }
  SECTION("duplicate annotations collapse") {
    std::vector<PtmAnnotation> dup = {{"p1", 7, 'K', 0}, {"p1", 7, 'K', 0}, {"p1", 7, 'K', 0}};
    auto counts = build_cooccurrence(dup, 2);
    REQUIRE(counts.total_sites == 1);
    REQUIRE(counts.marginal[0] == 1);
  }
  SECTION("out-of-range type rejected") {
    std::vector<PtmAnnotation> bad = {{"p1", 1, 'K', 5}};
    REQUIRE_THROWS_AS(build_cooccurrence(bad, 2), DataError);
  }
}

TEST_CASE("npmi_matrix") {
  SECTION("perfect co-occurrence is +1") {
    // both types at every annotated site, but sites cover half the proteins
    std::vector<PtmAnnotation> ann;
    for (int i = 0; i < 4; ++i) {
      ann.push_back({"p" + std::to_string(i), 3, 'K', 0});
      ann.push_back({"p" + std::to_string(i), 3, 'K', 1});
    }
    ann.push_back({"solo", 2, 'S', 2});  // extra site so p(a,b) < 1
    auto m = npmi_matrix(build_cooccurrence(ann, 3));
    REQUIRE_THAT(m.at(0, 1), Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
  SECTION("independence is 0") {
    // total 4 sites, each marginal 2, joint 1: p(ab) = 1/4 = p(a) p(b)
    std::vector<PtmAnnotation> ann = {
        {"p1", 1, 'K', 0}, {"p1", 1, 'K', 1},  // both
        {"p2", 1, 'K', 0},                     // a only
        {"p3", 1, 'K', 1},                     // b only
        {"p4", 1, 'K', 2},                     // neither
    };
    auto m = npmi_matrix(build_cooccurrence(ann, 3));
    REQUIRE_THAT(m.at(0, 1), Catch::Matchers::WithinAbs(0.0, 1e-12));
  }
  SECTION("mutual exclusion is -1") {
    std::vector<PtmAnnotation> ann = {{"p1", 1, 'K', 0}, {"p2", 1, 'K', 1}};
    auto m = npmi_matrix(build_cooccurrence(ann, 2));
    REQUIRE(m.at(0, 1) == -1.0);
  }
  SECTION("hand arithmetic on the three-site example") {
    auto m = npmi_matrix(build_cooccurrence(three_site_example(), 2));
    const double expected = std::log((1.0 / 3.0) / (4.0 / 9.0)) / (-std::log(1.0 / 3.0));
    REQUIRE_THAT(m.at(0, 1), Catch::Matchers::WithinAbs(expected, 1e-12));
    REQUIRE_THAT(m.at(0, 1), Catch::Matchers::WithinAbs(-0.2618, 5e-4));
  }
  SECTION("unobserved type gives 0") {
    std::vector<PtmAnnotation> ann = {{"p1", 1, 'K', 0}};
    auto m = npmi_matrix(build_cooccurrence(ann, 2));
    REQUIRE(m.at(0, 1) == 0.0);
  }
  SECTION("no sites is an error") {
    REQUIRE_THROWS_AS(npmi_matrix(build_cooccurrence({}, 2)), DataError);
  }
  SECTION("symmetric, zero diagonal, bounded on random inputs") {
    Rng rng(31, 1);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t c = 2 + rng.below(5);
      std::vector<PtmAnnotation> ann;
      const std::size_t n = 1 + rng.below(40);
      for (std::size_t i = 0; i < n; ++i) {
        std::string pid = "p" + std::to_string(rng.below(6));
        std::size_t pos = 1 + rng.below(10);
        ann.push_back({pid, pos, 'K', rng.below(c)});
      }
      auto m = npmi_matrix(build_cooccurrence(ann, c));
      for (std::size_t a = 0; a < c; ++a) {
        REQUIRE(m.at(a, a) == 0.0);
        for (std::size_t b = 0; b < c; ++b) {
          REQUIRE(m.at(a, b) == m.at(b, a));
          REQUIRE(m.at(a, b) >= -1.0);
          REQUIRE(m.at(a, b) <= 1.0);
        }
      }
    }
  }
  SECTION("json round trip") {
    auto m = npmi_matrix(build_cooccurrence(three_site_example(), 2));
    m.labels = {"alpha", "beta"};
    auto j = crosstalk_to_json(m);
    auto back = crosstalk_from_json(j);
    REQUIRE(back.num_types == 2);
    REQUIRE(back.labels == m.labels);
    REQUIRE(back.values == m.values);
  }
}

TEST_CASE("project_prior") {
  Rng rng(5, 1);
  Tensor prior = random_tensor({3, 3}, rng);
  // symmetrize with zero diagonal, as the prior contract requires
  for (std::size_t a = 0; a < 3; ++a) {
    prior.at(a, a) = 0.0;
    for (std::size_t b = 0; b < a; ++b) prior.at(b, a) = prior.at(a, b);
  }

  SECTION("identity projections give P P^T") {
    PromptParams p;
    p.proj_a = Tensor::eye(3);
    p.proj_b = Tensor::eye(3);
    p.alpha = Tensor::scalar(1.0);
    Tensor r = project_prior(prior, p);
    Tensor expected = matmul(prior, transpose(prior));
    REQUIRE(bitwise_equal(r, expected));
  }
  SECTION("zero first projection annihilates") {
    PromptParams p;
    p.proj_a = Tensor::zeros({3, 3});
    p.proj_b = random_tensor({3, 3}, rng);
    p.alpha = Tensor::scalar(1.0);
    Tensor r = project_prior(prior, p);
    for (std::size_t i = 0; i < r.size(); ++i) REQUIRE(r.at(i) == 0.0);
  }
  SECTION("random case matches hand product") {
    PromptParams p;
    p.proj_a = random_tensor({3, 3}, rng);
    p.proj_b = random_tensor({3, 3}, rng);
    p.alpha = Tensor::scalar(1.0);
    Tensor r = project_prior(prior, p);
    // independent arithmetic: R[i][j] = sum_p (P A)[i][p] (P B)[j][p]
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double acc = 0.0;
        for (std::size_t p_ = 0; p_ < 3; ++p_) {
          double l = 0.0, rr = 0.0;
          for (std::size_t k = 0; k < 3; ++k) {
            l += prior.at(i, k) * p.proj_a.at(k, p_);
            rr += prior.at(j, k) * p.proj_b.at(k, p_);
          }
          acc += l * rr;
        }
        REQUIRE_THAT(r.at(i, j), Catch::Matchers::WithinAbs(acc, 1e-12));
      }
  }
  SECTION("swapping the projections transposes R") {
    PromptParams p;
    p.proj_a = random_tensor({3, 3}, rng);
    p.proj_b = random_tensor({3, 3}, rng);
    p.alpha = Tensor::scalar(1.0);
    PromptParams swapped;
    swapped.proj_a = p.proj_b;
    swapped.proj_b = p.proj_a;
    swapped.alpha = p.alpha;
    Tensor r = project_prior(prior, p);
    Tensor rt = project_prior(prior, swapped);
    REQUIRE(bitwise_equal(rt, transpose(r)));
  }
  SECTION("shape mismatch rejected") {
    PromptParams p;
    p.proj_a = Tensor::zeros({2, 2});
    p.proj_b = Tensor::zeros({2, 2});
    p.alpha = Tensor::scalar(1.0);
    REQUIRE_THROWS_AS(project_prior(prior, p), std::invalid_argument);
  }
}

namespace {

Tensor one_hot_rows(std::size_t rows, std::size_t cols, const std::vector<std::size_t>& hot) {
  Tensor t = Tensor::zeros({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) t.at(i, hot[i]) = 1.0;
  return t;
}

}  // namespace

TEST_CASE("prompt_bias") {
  Rng rng(9, 1);
  Rng drop(1, rng_stream::kPromptDropout);
  PromptParams params;
  params.proj_a = Tensor::eye(3);
  params.proj_b = Tensor::eye(3);
  params.alpha = Tensor::scalar(0.7);
  params.dropout_rate = 0.1;

  SECTION("zero relation gives zero bias") {
    Tensor probs = softmax_lastdim(random_tensor({4, 3}, rng));
    Tensor b = prompt_bias(probs, Tensor::zeros({3, 3}), params, Mode::eval, drop);
    for (std::size_t i = 0; i < b.size(); ++i) REQUIRE(b.at(i) == 0.0);
  }
  SECTION("one-hot rows select a single relation entry") {
    Tensor r = random_tensor({3, 3}, rng);
    Tensor probs = one_hot_rows(2, 3, {1, 2});
    Tensor b = prompt_bias(probs, r, params, Mode::eval, drop);
    REQUIRE_THAT(b.at(0, 1), Catch::Matchers::WithinAbs(0.7 * std::tanh(r.at(1, 2)), 1e-12));
    REQUIRE_THAT(b.at(1, 0), Catch::Matchers::WithinAbs(0.7 * std::tanh(r.at(2, 1)), 1e-12));
  }
  SECTION("zero alpha gives zero bias") {
    PromptParams p2 = params;
    p2.alpha = Tensor::scalar(0.0);
    Tensor probs = softmax_lastdim(random_tensor({4, 3}, rng));
    Tensor b = prompt_bias(probs, random_tensor({3, 3}, rng), p2, Mode::eval, drop);
    for (std::size_t i = 0; i < b.size(); ++i) REQUIRE(b.at(i) == 0.0);
  }
  SECTION("eval mode is deterministic and bounded by |alpha|") {
    Tensor probs = softmax_lastdim(random_tensor({5, 3}, rng));
    Tensor r = random_tensor({3, 3}, rng, -4.0, 4.0);
    Rng d1(1, 1), d2(2, 2);
    Tensor b1 = prompt_bias(probs, r, params, Mode::eval, d1);
    Tensor b2 = prompt_bias(probs, r, params, Mode::eval, d2);
    REQUIRE(bitwise_equal(b1, b2));
    for (std::size_t i = 0; i < b1.size(); ++i) REQUIRE(std::abs(b1.at(i)) <= 0.7);
  }
  SECTION("train-mode magnitude stays within |alpha|/(1-rate)") {
    Tensor probs = softmax_lastdim(random_tensor({6, 3}, rng));
    Tensor r = random_tensor({3, 3}, rng, -4.0, 4.0);
    Rng d(3, rng_stream::kPromptDropout);
    Tensor b = prompt_bias(probs, r, params, Mode::train, d);
    for (std::size_t i = 0; i < b.size(); ++i) REQUIRE(std::abs(b.at(i)) <= 0.7 / 0.9 + 1e-12);
  }
  SECTION("malformed probability rows rejected") {
    Tensor bad = Tensor::full({2, 3}, 0.5);
    REQUIRE_THROWS_AS(prompt_bias(bad, Tensor::zeros({3, 3}), params, Mode::eval, drop), std::invalid_argument);
  }
}

namespace {

// Plain scaled dot-product attention, written independently of the library
// path, mirroring the same accumulation order.
Tensor reference_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  const std::size_t l = q.rows(), d = q.cols(), dv = v.cols();
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor logits = Tensor::zeros({l, l});
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t j = 0; j < l; ++j) logits.at(i, j) += q.at(i, p) * k.at(j, p);
  for (std::size_t i = 0; i < l * l; ++i) logits.at(i) = logits.at(i) * inv;
  Tensor weights = Tensor::zeros({l, l});
  for (std::size_t i = 0; i < l; ++i) {
    double mx = logits.at(i, 0);
    for (std::size_t j = 1; j < l; ++j) mx = std::max(mx, logits.at(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < l; ++j) {
      weights.at(i, j) = std::exp(logits.at(i, j) - mx);
      denom += weights.at(i, j);
    }
    for (std::size_t j = 0; j < l; ++j) weights.at(i, j) /= denom;
  }
  Tensor out = Tensor::zeros({l, dv});
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t p = 0; p < l; ++p)
      for (std::size_t j = 0; j < dv; ++j) out.at(i, j) += weights.at(i, p) * v.at(p, j);
  return out;
}

}  // namespace

TEST_CASE("prompted_attention") {
  Rng rng(21, 1);

  SECTION("uniform attention averages V") {
    Tensor v = random_tensor({4, 3}, rng);
    Tensor out = prompted_attention(Tensor::zeros({4, 2}), Tensor::zeros({4, 2}), v, Tensor::zeros({4, 4}));
    for (std::size_t j = 0; j < 3; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < 4; ++i) mean += v.at(i, j);
      mean /= 4.0;
      for (std::size_t i = 0; i < 4; ++i) REQUIRE_THAT(out.at(i, j), Catch::Matchers::WithinAbs(mean, 1e-12));
    }
  }
  SECTION("a large bias entry dominates its row") {
    Tensor v = random_tensor({3, 2}, rng);
    Tensor bias = Tensor::zeros({3, 3});
    bias.at(1, 2) = 30.0;
    Tensor out = prompted_attention(Tensor::zeros({3, 2}), Tensor::zeros({3, 2}), v, bias);
    // weight of the favored key exceeds 0.999, so row 1 ~ V row 2
    for (std::size_t j = 0; j < 2; ++j) REQUIRE_THAT(out.at(1, j), Catch::Matchers::WithinAbs(v.at(2, j), 2e-3));
  }
  SECTION("zero bias equals reference attention bitwise") {
    Tensor q = random_tensor({5, 4}, rng);
    Tensor k = random_tensor({5, 4}, rng);
    Tensor v = random_tensor({5, 3}, rng);
    Tensor out = prompted_attention(q, k, v, Tensor::zeros({5, 5}));
    REQUIRE(bitwise_equal(out, reference_attention(q, k, v)));
  }
  SECTION("post-softmax weight rows sum to one") {
    // with V = I the attention output rows are exactly the weight rows
    Tensor q = random_tensor({6, 3}, rng, -3.0, 3.0);
    Tensor k = random_tensor({6, 3}, rng, -3.0, 3.0);
    Tensor b = random_tensor({6, 6}, rng, -2.0, 2.0);
    Tensor out = prompted_attention(q, k, Tensor::eye(6), b);
    for (std::size_t i = 0; i < 6; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 6; ++j) {
        REQUIRE(out.at(i, j) >= 0.0);
        s += out.at(i, j);
      }
      REQUIRE_THAT(s, Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
  }
  SECTION("shape mismatch rejected") {
    REQUIRE_THROWS_AS(
        prompted_attention(Tensor::zeros({3, 2}), Tensor::zeros({3, 2}), Tensor::zeros({3, 2}), Tensor::zeros({2, 3})),
        std::invalid_argument);
  }
}

TEST_CASE("prompt path gradients") {
  Rng rng(77, 1);
  const std::size_t L = 4, C = 3, D = 4;
  Tensor q = random_tensor({L, D}, rng);
  Tensor k = random_tensor({L, D}, rng);
  Tensor v = random_tensor({L, D}, rng);
  Tensor relation = random_tensor({C, C}, rng);
  Tensor probs = softmax_lastdim(random_tensor({L, C}, rng));
  Tensor weight = random_tensor({L, D}, rng);  // fixed readout
  PromptParams params;
  params.proj_a = random_tensor({C, C}, rng);
  params.proj_b = random_tensor({C, C}, rng);
  params.alpha = Tensor::scalar(0.4, true);
  params.dropout_rate = 0.0;

  Tensor prior = random_tensor({C, C}, rng);

  auto attn_loss = [&](const Tensor& qq, const Tensor& kk, const Tensor& vv, const Tensor& rr,
                       const PromptParams& pp) {
    Rng drop(5, rng_stream::kPromptDropout);
    Tensor bias = prompt_bias(probs, rr, pp, Mode::eval, drop);
    return sum(mul(prompted_attention(qq, kk, vv, bias), weight));
  };

  CHECK(grad_check([&](const Tensor& t) { return attn_loss(t, k, v, relation, params); }, q) < 1e-5);
  CHECK(grad_check([&](const Tensor& t) { return attn_loss(q, t, v, relation, params); }, k) < 1e-5);
  CHECK(grad_check([&](const Tensor& t) { return attn_loss(q, k, t, relation, params); }, v) < 1e-5);
  CHECK(grad_check([&](const Tensor& t) { return attn_loss(q, k, v, t, params); }, relation) < 1e-5);
  CHECK(grad_check([&](const Tensor& t) {
          PromptParams pp = params;
          pp.alpha = t;
          return attn_loss(q, k, v, relation, pp);
        },
        params.alpha) < 1e-5);
  // through the projection of the prior as well
  CHECK(grad_check([&](const Tensor& t) {
          PromptParams pp = params;
          pp.proj_a = t;
          return attn_loss(q, k, v, project_prior(prior, pp), pp);
        },
        params.proj_a) < 1e-5);
  CHECK(grad_check([&](const Tensor& t) {
          PromptParams pp = params;
          pp.proj_b = t;
          return attn_loss(q, k, v, project_prior(prior, pp), pp);
        },
        params.proj_b) < 1e-5);
}
