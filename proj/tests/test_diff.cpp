#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "occlab/diff.hpp"
#include "occlab/optim.hpp"
#include "test_support.hpp"

using namespace occlab;
using diff::Mat;
using diff::Value;

TEST_CASE("linear identity and hand-computed products") {
  Value x = Value::constant((Mat(1, 2) << 1, 2).finished());
  Value w = Value::param((Mat(2, 2) << 1, 0, 0, 1).finished());
  Value b = Value::param(Mat::Zero(1, 2));
  Value out = diff::linear(x, w, b);
  CHECK(out.value()(0, 0) == doctest::Approx(1.0));
  CHECK(out.value()(0, 1) == doctest::Approx(2.0));

  Value x2 = Value::constant((Mat(1, 2) << 1, 1).finished());
  Value w2 = Value::param((Mat(2, 2) << 2, 3, 4, 5).finished());
  Value b2 = Value::param(Mat::Ones(1, 2));
  Value out2 = diff::linear(x2, w2, b2);
  CHECK(out2.value()(0, 0) == doctest::Approx(7.0));
  CHECK(out2.value()(0, 1) == doctest::Approx(9.0));
}

TEST_CASE("linear: gradient of sum(out) w.r.t. bias is all ones") {
  util::Rng rng(7);
  Value x = Value::constant(testing::random_matrix(5, 3, rng));
  Value w = Value::param(testing::random_matrix(3, 4, rng));
  Value b = Value::param(Mat::Zero(1, 4));
  Value loss = diff::sum(diff::linear(x, w, b));
  diff::backward(loss);
  for (int c = 0; c < 4; ++c) CHECK(b.grad()(0, c) == doctest::Approx(5.0));
}

TEST_CASE("linear rejects shape mismatch") {
  Value x = Value::constant(Mat::Zero(2, 3));
  Value w = Value::param(Mat::Zero(4, 2));
  Value b = Value::param(Mat::Zero(1, 2));
  CHECK_THROWS_AS(diff::linear(x, w, b), std::invalid_argument);
}

TEST_CASE("layer_norm closed forms") {
  Value gain = Value::param(Mat::Ones(1, 3));
  Value shift = Value::param(Mat::Zero(1, 3));
  Value constant_row = Value::constant((Mat(1, 3) << 4, 4, 4).finished());
  Value out = diff::layer_norm(constant_row, gain, shift);
  for (int c = 0; c < 3; ++c) CHECK(out.value()(0, c) == doctest::Approx(0.0));

  Value g2 = Value::param(Mat::Ones(1, 2));
  Value s2 = Value::param(Mat::Zero(1, 2));
  Value row = Value::constant((Mat(1, 2) << 1, 3).finished());
  Value out2 = diff::layer_norm(row, g2, s2, 1e-14);
  CHECK(out2.value()(0, 0) == doctest::Approx(-1.0));
  CHECK(out2.value()(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("softmax closed forms and invariants") {
  Value equal = Value::constant(Mat::Zero(1, 3));
  Value out = diff::softmax(equal);
  for (int c = 0; c < 3; ++c) CHECK(out.value()(0, c) == doctest::Approx(1.0 / 3.0));

  Value logits = Value::constant((Mat(1, 2) << 0.0, std::log(2.0)).finished());
  Value out2 = diff::softmax(logits);
  CHECK(out2.value()(0, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(out2.value()(0, 1) == doctest::Approx(2.0 / 3.0));

  util::Rng rng(3);
  Mat raw = testing::random_matrix(20, 5, rng, -10, 10);
  Mat shifted = raw.array() + 123.5;
  Mat a = diff::softmax(Value::constant(raw)).value();
  Mat b = diff::softmax(Value::constant(shifted)).value();
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  for (int r = 0; r < a.rows(); ++r) CHECK(std::abs(a.row(r).sum() - 1.0) < 1e-12);
}

TEST_CASE("activation values") {
  Value x = Value::constant((Mat(1, 3) << -1, 2, 0).finished());
  Mat r = diff::relu(x).value();
  CHECK(r(0, 0) == 0.0);
  CHECK(r(0, 1) == 2.0);
  CHECK(diff::sigmoid(Value::constant(Mat::Zero(1, 1))).value()(0, 0) == doctest::Approx(0.5));
  CHECK(diff::softplus(Value::constant(Mat::Zero(1, 1))).value()(0, 0) ==
        doctest::Approx(std::log(2.0)));
}

TEST_CASE("detach forwards values and blocks gradients") {
  Value x = Value::param((Mat(1, 2) << 0.3, -0.7).finished());
  Value detached = diff::detach(x);
  CHECK(detached.value() == x.value());
  Value loss = diff::sum(diff::mul(detached, detached));
  diff::backward(loss);
  CHECK(x.grad().cwiseAbs().maxCoeff() == 0.0);

  // The same term through the live path does carry gradient.
  Value loss2 = diff::sum(diff::mul(x, x));
  x.node()->zero_grad();
  diff::backward(loss2);
  CHECK(x.grad()(0, 0) == doctest::Approx(0.6));
}

TEST_CASE("shared-node DAG gradient equals brute-force path sum") {
  // f(a) = sum((a + a*a) * a); brute force via scalar calculus at a few points.
  auto brute = [](double a) { return 2 * a + 3 * a * a; };  // d/da (a^2 + a^3)
  for (double v : {-1.3, -0.2, 0.4, 2.0}) {
    Value a = Value::param(Mat::Constant(1, 1, v));
    Value shared = diff::mul(a, a);
    Value f = diff::sum(diff::add(shared, diff::mul(shared, a)));
    // f = a^2 + a^3 with `shared` feeding two consumers.
    diff::backward(f);
    CHECK(a.grad()(0, 0) == doctest::Approx(brute(v)).epsilon(1e-10));
  }
}

TEST_CASE("gradcheck: core primitives vs finite differences") {
  util::Rng rng(11);
  for (int instance = 0; instance < 5; ++instance) {
    Value x = Value::param(testing::random_matrix(4, 3, rng));
    Value w = Value::param(testing::random_matrix(3, 5, rng));
    Value b = Value::param(testing::random_matrix(1, 5, rng));
    Value gain = Value::param(testing::random_matrix(1, 5, rng, 0.5, 1.5));
    Value shift = Value::param(testing::random_matrix(1, 5, rng));
    auto loss = [&]() {
      Value h = diff::linear(x, w, b);
      h = diff::layer_norm(h, gain, shift);
      h = diff::softmax(h);
      Value s = diff::sigmoid(h);
      Value p = diff::softplus(diff::mul(h, s));
      return diff::mean(diff::mul(p, diff::exp(diff::scale(h, 0.3))));
    };
    CHECK(testing::check_gradients({x, w, b, gain, shift}, loss) < 1e-5);
  }
}

TEST_CASE("gradcheck: gather/scatter/rowwise/concat plumbing") {
  util::Rng rng(13);
  Value x = Value::param(testing::random_matrix(6, 4, rng));
  Value s = Value::param(testing::random_matrix(3, 1, rng, 0.2, 1.0));
  Value y = Value::param(testing::random_matrix(3, 2, rng));
  const std::vector<int> idx = {4, 0, 5};
  auto loss = [&]() {
    Value g = diff::gather_rows(x, idx);
    Value scaled = diff::rowwise_scale(g, s);
    Value joined = diff::concat_cols(scaled, y);
    Value back = diff::scatter_rows(joined, idx, 6);
    Value sums = diff::row_sum(back);
    Value m = diff::mean_rows(diff::mul(back, back));
    return diff::add(diff::sum(m), diff::mean(sums));
  };
  CHECK(testing::check_gradients({x, s, y}, loss) < 1e-5);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  util::Rng rng(5);
  diff::ParamStore store;
  Value p = store.create("p", 2, 2, 2, rng);
  const Mat before = p.value();
  store.zero_grads();
  std::string diag;
  CHECK(store.adam_step({}, &diag));
  CHECK((p.value() - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam: bias-corrected first step moves by about lr") {
  diff::ParamStore store;
  Value p = store.create_zeros("theta", 1, 1);
  p.node()->value(0, 0) = 1.0;
  store.zero_grads();
  p.node()->grad(0, 0) = 1.0;
  diff::AdamConfig cfg;
  cfg.lr = 5e-4;
  CHECK(store.adam_step(cfg));
  CHECK(p.value()(0, 0) == doctest::Approx(1.0 - cfg.lr).epsilon(1e-6));
}

TEST_CASE("adam: aborts on non-finite gradient without touching state") {
  diff::ParamStore store;
  Value p = store.create_zeros("theta", 1, 1);
  p.node()->value(0, 0) = 2.0;
  store.zero_grads();
  p.node()->grad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  std::string diag;
  CHECK_FALSE(store.adam_step({}, &diag));
  CHECK(diag.find("theta") != std::string::npos);
  CHECK(p.value()(0, 0) == 2.0);
  CHECK(store.step_count() == 0);
}

TEST_CASE("adam: identical seeded runs produce bitwise identical parameters") {
  auto run = [](uint64_t seed) {
    util::Rng rng(seed);
    diff::ParamStore store;
    Value w = store.create("w", 3, 3, 3, rng);
    Value x = Value::constant(testing::random_matrix(4, 3, rng));
    for (int step = 0; step < 25; ++step) {
      store.zero_grads();
      Value loss = diff::mean(diff::mul(diff::matmul(x, w), diff::matmul(x, w)));
      diff::backward(loss);
      REQUIRE(store.adam_step({}));
    }
    return store.get("w").value();
  };
  const Mat a = run(42), b = run(42);
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c) CHECK(a(r, c) == b(r, c));
}

TEST_CASE("checkpoint round-trips values, moments and step bitwise") {
  util::Rng rng(17);
  diff::ParamStore store;
  store.create("a.w", 3, 4, 3, rng);
  store.create("b.w", 2, 2, 2, rng);
  // Take a few steps so moments are non-trivial.
  for (int i = 0; i < 3; ++i) {
    store.zero_grads();
    Value loss = diff::sum(diff::mul(store.get("a.w"), store.get("a.w")));
    Value loss2 = diff::sum(diff::mul(store.get("b.w"), store.get("b.w")));
    diff::backward(diff::add(loss, loss2));
    REQUIRE(store.adam_step({}));
  }

  const auto path = std::filesystem::temp_directory_path() / "occlab_test_ckpt.bin";
  store.save(path, "{\"kind\":\"test\"}");
  std::string meta;
  diff::ParamStore loaded = diff::ParamStore::load(path, &meta);
  CHECK(meta == "{\"kind\":\"test\"}");
  CHECK(loaded.step_count() == store.step_count());
  REQUIRE(loaded.names() == store.names());
  for (const auto& name : store.names()) {
    const Mat& a = store.get(name).value();
    const Mat& b = loaded.get(name).value();
    REQUIRE(a.rows() == b.rows());
    for (int r = 0; r < a.rows(); ++r)
      for (int c = 0; c < a.cols(); ++c) CHECK(a(r, c) == b(r, c));
  }
  CHECK(loaded.values_hash() == store.values_hash());
  std::filesystem::remove(path);
}
