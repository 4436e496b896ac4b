#include <cmath>
#include <vector>

#include "doctest.h"
#include "fairkd/nn.hpp"
#include "test_util.hpp"

using namespace fairkd;
using nn::Tape;

namespace {

Matrix random_matrix(Rng& rng, int r, int c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("first Adam step moves each entry by lr against the gradient sign") {
  nn::Parameter<double> p("p", Matrix::Constant(2, 2, 1.0));
  nn::Adam<double> adam({&p}, nn::AdamConfig{});
  p.grad << 3.0, -0.5, 1e-3, -20.0;
  adam.step();
  CHECK(p.value(0, 0) == doctest::Approx(1.0 - 0.001).epsilon(1e-9));
  CHECK(p.value(0, 1) == doctest::Approx(1.0 + 0.001).epsilon(1e-9));
  CHECK(p.value(1, 0) == doctest::Approx(1.0 - 0.001).epsilon(1e-6));
  CHECK(p.value(1, 1) == doctest::Approx(1.0 + 0.001).epsilon(1e-9));
}

TEST_CASE("AdamW decays before the update") {
  nn::Parameter<double> p("p", Matrix::Constant(1, 1, 2.0));
  nn::Adam<double> adam({&p}, nn::AdamConfig{.lr = 0.1, .weight_decay = 0.5}, nn::AdamVariant::kAdamW);
  p.grad(0, 0) = 1.0;
  adam.step();
  CHECK(p.value(0, 0) == doctest::Approx(2.0 * (1 - 0.05) - 0.1).epsilon(1e-9));
}

TEST_CASE("Adam rejects non-finite gradients") {
  nn::Parameter<double> p("p", Matrix::Zero(1, 1));
  nn::Adam<double> adam({&p}, nn::AdamConfig{});
  p.grad(0, 0) = std::nan("");
  CHECK_ERROR_CODE(adam.step(), ErrorCode::kNumeric);
}

TEST_CASE("frozen parameters keep their values") {
  nn::Parameter<double> p("p", Matrix::Constant(1, 1, 1.0));
  p.trainable = false;
  nn::Adam<double> adam({&p}, nn::AdamConfig{});
  p.grad(0, 0) = 1.0;
  adam.step();
  CHECK(p.value(0, 0) == 1.0);
}

TEST_CASE("minibatches cover every row once") {
  Rng rng(1);
  const auto batches = nn::minibatches(10, 4, rng);
  REQUIRE(batches.size() == 3);
  CHECK(batches.back().size() == 2);
  std::vector<int> seen(10, 0);
  for (const auto& b : batches) {
    for (int i : b) ++seen[i];
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
}

TEST_CASE("elementary ops pass finite-difference checks") {
  Rng rng(7);
  nn::Parameter<double> a("a", random_matrix(rng, 4, 3)), b("b", random_matrix(rng, 3, 2));
  nn::Parameter<double> row("row", random_matrix(rng, 1, 2)), s("s", random_matrix(rng, 1, 1));
  const Matrix target = random_matrix(rng, 4, 2);
  const auto r = nn::grad_check<double>(
      [&](Tape<double>& t) {
        auto z = nn::add(nn::matmul(t.parameter(a), t.parameter(b)), t.parameter(row));
        z = nn::add(z, t.parameter(s));
        auto h = nn::mul(nn::sigmoid(z), nn::square(z));
        return nn::add(nn::mse(h, target), nn::mean(nn::row_sum(h)));
      },
      {&a, &b, &row, &s});
  CHECK(r.max_relative_error < 1e-6);
}

TEST_CASE("cross entropy and fairness loss gradients") {
  Rng rng(8);
  nn::Parameter<double> logits("logits", random_matrix(rng, 6, 1));
  Matrix labels(6, 1);
  labels << 1, 0, 1, 1, 0, 0;
  const std::vector<std::uint8_t> majority{1, 1, 0, 0, 0, 1};
  const auto r = nn::grad_check<double>(
      [&](Tape<double>& t) {
        auto p = nn::sigmoid(t.parameter(logits));
        return nn::add(nn::cross_entropy(p, labels), nn::scale(nn::fairness_loss(p, majority), 3.0));
      },
      {&logits});
  CHECK(r.max_relative_error < 1e-6);
}

TEST_CASE("fairness loss on the tape matches the hand value") {
  Tape<double> t;
  Matrix scores(4, 1);
  scores << 1, 1, 0, 0;
  const std::vector<std::uint8_t> majority{1, 0, 0, 0};
  CHECK(nn::fairness_loss(t.constant(scores), majority).value()(0, 0) == 0.25);
}

TEST_CASE("MLP and embedding gradients") {
  Rng rng(9);
  nn::Mlp<double> mlp(nn::MlpSpec::relu_stack({3, 5, 2}, 4));
  for (auto& b : mlp.biases()) b.value = random_matrix(rng, 1, static_cast<int>(b.value.cols())) * 0.1;
  nn::EmbeddingTable<double> table(5, 3, rng, "emb", 0.5);
  const std::vector<int> idx{0, 4, 4, 2};
  const Matrix target = random_matrix(rng, 4, 2);
  const auto r = nn::grad_check<double>(
      [&](Tape<double>& t) { return nn::mse(mlp.forward(t, table.lookup(t, idx)), target); },
      [&] {
        auto ps = mlp.parameters();
        ps.push_back(&table.parameter());
        return ps;
      }());
  CHECK(r.max_relative_error < 1e-5);
}

TEST_CASE("MLP predict matches the taped forward") {
  Rng rng(10);
  nn::Mlp<double> mlp(nn::MlpSpec::relu_stack({4, 6, 3, 1}, 2));
  const Matrix x = random_matrix(rng, 5, 4);
  Tape<double> t;
  const Matrix taped = mlp.forward(t, t.constant(x)).value();
  CHECK((taped - mlp.predict(x)).cwiseAbs().maxCoeff() == 0.0);
  CHECK_ERROR_CODE(mlp.predict(random_matrix(rng, 2, 3)), ErrorCode::kShape);
}

TEST_CASE("configuration errors") {
  CHECK_ERROR_CODE(nn::Mlp<double>(nn::MlpSpec{{3}, {}, 0}), ErrorCode::kConfiguration);
  Rng rng(1);
  CHECK_ERROR_CODE(nn::EmbeddingTable<double>(0, 2, rng), ErrorCode::kConfiguration);
  CHECK_ERROR_CODE(nn::minibatches(3, 0, rng), ErrorCode::kConfiguration);
}
