#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "compass/core/gradcheck.hpp"
#include "compass/core/ops.hpp"
#include "compass/core/tensor.hpp"
#include "support/test_util.hpp"

using namespace compass;
using testutil::bitwise_equal;
using testutil::random_tensor;

TEST_CASE("matmul basics") {
  Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});

  SECTION("identity") {
    Tensor out = matmul(Tensor::eye(2), m);
    REQUIRE(bitwise_equal(out, m));
  }
  SECTION("hand arithmetic") {
    Tensor v = Tensor::from({2, 1}, {5, 6});
    Tensor out = matmul(m, v);
    REQUIRE(out.at(0, 0) == 17.0);
    REQUIRE(out.at(1, 0) == 39.0);
  }
  SECTION("zero matrix annihilates") {
    Tensor out = matmul(Tensor::zeros({3, 2}), m);
    for (std::size_t i = 0; i < out.size(); ++i) REQUIRE(out.data()[i] == 0.0);
  }
  SECTION("shape mismatch throws") {
    REQUIRE_THROWS_AS(matmul(m, Tensor::zeros({3, 2})), std::invalid_argument);
  }
}

TEST_CASE("activations") {
  REQUIRE(sigmoid(Tensor::scalar(0.0)).value() == 0.5);
  REQUIRE(tanh_act(Tensor::scalar(0.0)).value() == 0.0);
  REQUIRE(relu(Tensor::from({2}, {-3.5, 2.0})).at(0) == 0.0);
  REQUIRE(relu(Tensor::from({2}, {-3.5, 2.0})).at(1) == 2.0);

  SECTION("sigmoid strictly inside (0,1), tanh inside (-1,1)") {
    Tensor x = Tensor::from({4}, {-800.0, -5.0, 5.0, 800.0});
    Tensor s = sigmoid(x);
    for (std::size_t i = 0; i < s.size(); ++i) {
      REQUIRE(s.at(i) >= 0.0);
      REQUIRE(s.at(i) <= 1.0);
    }
    Tensor t = tanh_act(x);
    REQUIRE(t.at(0) >= -1.0);
    REQUIRE(t.at(3) <= 1.0);
  }
}

TEST_CASE("softmax_lastdim") {
  SECTION("symmetry") {
    Tensor out = softmax_lastdim(Tensor::from({3}, {0, 0, 0}));
    for (std::size_t i = 0; i < 3; ++i) REQUIRE_THAT(out.at(i), Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-15));
  }
  SECTION("closed form") {
    Tensor out = softmax_lastdim(Tensor::from({2}, {0.0, std::log(3.0)}));
    REQUIRE_THAT(out.at(0), Catch::Matchers::WithinAbs(0.25, 1e-12));
    REQUIRE_THAT(out.at(1), Catch::Matchers::WithinAbs(0.75, 1e-12));
  }
  SECTION("stability under large logits") {
    Tensor out = softmax_lastdim(Tensor::from({2}, {1000.0, 0.0}));
    REQUIRE_THAT(out.at(0), Catch::Matchers::WithinAbs(1.0, 1e-12));
    REQUIRE_THAT(out.at(1), Catch::Matchers::WithinAbs(0.0, 1e-12));
  }
  SECTION("rows sum to one") {
    Rng rng(7, 1);
    for (int trial = 0; trial < 50; ++trial) {
      Tensor x = random_tensor({4, 5}, rng, -30.0, 30.0);
      Tensor y = softmax_lastdim(x);
      for (std::size_t r = 0; r < 4; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 5; ++c) {
          REQUIRE(y.at(r, c) >= 0.0);
          s += y.at(r, c);
        }
        REQUIRE_THAT(s, Catch::Matchers::WithinAbs(1.0, 1e-12));
      }
    }
  }
}

TEST_CASE("dropout") {
  Rng rng(11, rng_stream::kDropout);
  Tensor x = random_tensor({10, 10}, rng);

  SECTION("eval mode is the identity") {
    Rng r2(1, 1);
    Tensor out = dropout(x, 0.5, Mode::eval, r2);
    REQUIRE(bitwise_equal(out, x));
  }
  SECTION("rate zero is the identity") {
    Rng r2(1, 1);
    Tensor out = dropout(x, 0.0, Mode::train, r2);
    REQUIRE(bitwise_equal(out, x));
  }
  SECTION("survivor scaling keeps the mean") {
    Rng r2(123, rng_stream::kDropout);
    Tensor ones = Tensor::full({100, 100}, 1.0);
    Tensor out = dropout(ones, 0.5, Mode::train, r2);
    double m = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) m += out.at(i);
    m /= static_cast<double>(out.size());
    REQUIRE_THAT(m, Catch::Matchers::WithinAbs(1.0, 0.05));
  }
  SECTION("rate >= 1 rejected") {
    Rng r2(1, 1);
    REQUIRE_THROWS_AS(dropout(x, 1.0, Mode::train, r2), std::invalid_argument);
  }
  SECTION("same stream, same mask") {
    Rng a(42, rng_stream::kDropout), b(42, rng_stream::kDropout);
    Tensor o1 = dropout(x, 0.3, Mode::train, a);
    Tensor o2 = dropout(x, 0.3, Mode::train, b);
    REQUIRE(bitwise_equal(o1, o2));
  }
}

TEST_CASE("backward") {
  SECTION("textbook derivative of sum(x^2)") {
    Tensor x = Tensor::from({2}, {1, 2}, true);
    GradTape tape;
    {
      GradTape::Scope scope(&tape);
      Tensor loss = sum(mul(x, x));
      tape.backward(loss);
    }
    auto g = x.grad();
    REQUIRE(g[0] == 2.0);
    REQUIRE(g[1] == 4.0);
  }
  SECTION("matmul gradients match finite differences") {
    Rng rng(3, 1);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    b.set_requires_grad(true);
    double err_a = grad_check([&](const Tensor& t) { return sum(matmul(t, b)); }, a);
    double err_b = grad_check([&](const Tensor& t) { return sum(matmul(a, t)); }, b);
    REQUIRE(err_a < 1e-6);
    REQUIRE(err_b < 1e-6);
  }
  SECTION("disconnected leaf gets zero grad") {
    Tensor x = Tensor::from({2}, {1, 2}, true);
    Tensor unused = Tensor::from({2}, {5, 5}, true);
    GradTape tape;
    {
      GradTape::Scope scope(&tape);
      Tensor loss = sum(x);
      // touch `unused` so the tape sees it, on a branch never reaching loss
      Tensor dead = mul_scalar(unused, 2.0);
      (void)dead;
      tape.backward(loss);
    }
    auto g = unused.grad();
    REQUIRE(g[0] == 0.0);
    REQUIRE(g[1] == 0.0);
  }
  SECTION("non-scalar loss rejected") {
    Tensor x = Tensor::from({2}, {1, 2}, true);
    GradTape tape;
    GradTape::Scope scope(&tape);
    Tensor y = mul(x, x);
    REQUIRE_THROWS_AS(tape.backward(y), std::invalid_argument);
  }
}

TEST_CASE("grad_check on itself") {
  SECTION("smooth function") {
    Rng rng(5, 1);
    Tensor x = random_tensor({3, 3}, rng);
    REQUIRE(grad_check([](const Tensor& t) { return sum(sigmoid(t)); }, x) < 1e-6);
  }
  SECTION("constant function has zero error") {
    Tensor x = Tensor::from({2}, {1, 2});
    REQUIRE(grad_check([](const Tensor& t) { return mul_scalar(sum(mul_scalar(t, 0.0)), 1.0); }, x) == 0.0);
  }
}

TEST_CASE("gradcheck battery over every op") {
  Rng rng(17, 1);
  const double tol = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({3, 4}, rng, -2.0, 2.0);
    Tensor y = random_tensor({3, 4}, rng, -2.0, 2.0);
    Tensor m = random_tensor({4, 3}, rng, -2.0, 2.0);
    Tensor v = random_tensor({4}, rng, -2.0, 2.0);
    Tensor s = random_tensor({}, rng, 0.2, 2.0);
    Tensor pos = random_tensor({3, 4}, rng, 0.05, 0.95);

    CHECK(grad_check([&](const Tensor& t) { return sum(add(t, y)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(sub(y, t)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(mul(t, y)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(div(t, add_scalar(mul(y, y), 0.5))); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(neg(t)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(add_scalar(t, 1.7)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(mul_scalar(t, -0.6)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(scale(t, s)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(scale(x, t)); }, s) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(add_rowvec(t, v)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(add_rowvec(x, t)); }, v) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(matmul(t, m)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(transpose(t)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(sigmoid(t)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(tanh_act(t)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(softplus(t)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(compass::exp(mul_scalar(t, 0.3))); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(compass::log(t)); }, pos) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(pow_const(t, 2.0)); }, pos) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(mul(softmax_lastdim(t), y)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return mean(mul(t, y)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(mul(sum_axis0(t), sum_axis0(y))); }, x) < tol);
    Tensor cc = random_tensor({3, 8}, rng);
    CHECK(grad_check([&](const Tensor& t) { return sum(mul(concat_cols(t, y), cc)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(mul(concat_cols(y, t), cc)); }, x) < tol);
    Tensor cr = random_tensor({6, 4}, rng);
    CHECK(grad_check([&](const Tensor& t) { return sum(mul(concat_rows(t, y), cr)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(mul(concat_rows(y, t), cr)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(slice_cols(t, 1, 3)); }, x) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(slice_rows(t, 0, 2)); }, x) < tol);

    // relu: nudge away from the kink before differencing
    Tensor xr = x.clone();
    nudge_away_from(xr, 0.0, 1e-3);
    CHECK(grad_check([&](const Tensor& t) { return sum(relu(t)); }, xr) < 1e-4);

    // clamp: keep coordinates away from the clamp boundaries
    Tensor xc = random_tensor({3, 4}, rng, 0.1, 0.9);
    CHECK(grad_check([&](const Tensor& t) { return sum(clamp(t, 0.0, 1.0)); }, xc) < tol);

    // layer_norm with gain/bias
    Tensor gain = random_tensor({4}, rng, 0.5, 1.5);
    Tensor bias = random_tensor({4}, rng, -0.5, 0.5);
    CHECK(grad_check([&](const Tensor& t) { return sum(mul(layer_norm(t, gain, bias), y)); }, x) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) { return sum(mul(layer_norm(x, t, bias), y)); }, gain) < tol);
    CHECK(grad_check([&](const Tensor& t) { return sum(mul(layer_norm(x, gain, t), y)); }, bias) < tol);

    // embedding lookup
    Tensor table = random_tensor({5, 3}, rng);
    std::vector<std::size_t> ids = {0, 2, 2, 4};
    CHECK(grad_check([&](const Tensor& t) { return sum(mul(embedding_lookup(t, ids), embedding_lookup(t, ids))); },
                     table) < tol);

    // dropout with a fixed stream is deterministic, so it gradchecks
    CHECK(grad_check(
              [&](const Tensor& t) {
                Rng r(99, rng_stream::kDropout);
                return sum(mul(dropout(t, 0.4, Mode::train, r), y));
              },
              x) < tol);
  }
}

TEST_CASE("replaying a graph with the same seed is bitwise reproducible") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed, rng_stream::kInit);
    Tensor x = random_tensor({4, 4}, rng);
    Tensor w = random_tensor({4, 4}, rng);
    w.set_requires_grad(true);
    GradTape tape;
    GradTape::Scope scope(&tape);
    Rng drop(seed, rng_stream::kDropout);
    Tensor h = dropout(sigmoid(matmul(x, w)), 0.3, Mode::train, drop);
    Tensor loss = sum(h);
    tape.backward(loss);
    auto g = w.grad();
    g.push_back(loss.value());
    return g;
  };
  auto a = run(2024), b = run(2024), c = run(2025);
  REQUIRE(a == b);
  REQUIRE(a != c);
}

TEST_CASE("non-finite forward values are an error") {
  Tensor big = Tensor::full({2}, 1e308);
  REQUIRE_THROWS_AS(add(big, big), NumericError);
  Tensor z = Tensor::zeros({2});
  REQUIRE_THROWS_AS(div(Tensor::full({2}, 1.0), z), NumericError);
}
