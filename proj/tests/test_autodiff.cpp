#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "meshmotion/autodiff.hpp"

using namespace meshmotion;

namespace {

Parameter<double> random_param(std::string name, std::size_t r, std::size_t c, std::uint64_t seed, double lo = -1.0,
                               double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Parameter<double> p{std::move(name), Tensor<double>::matrix(r, c), {}};
  for (double& v : p.value.storage()) v = u(rng);
  p.zero_grad();
  return p;
}

}  // namespace

TEST_CASE("matmul and sum have the textbook gradient") {
  Parameter<double> a{"a", Tensor<double>({2, 2}, {1, 2, 3, 4}), {}};
  Parameter<double> b{"b", Tensor<double>({2, 1}, {5, 6}), {}};
  a.zero_grad();
  b.zero_grad();
  Tape<double> tape;
  const Var<double> out = ad::sum(ad::matmul(tape.parameter(a), tape.parameter(b)));
  CHECK(out.value()[0] == 1 * 5 + 2 * 6 + 3 * 5 + 4 * 6);
  tape.backward(out);
  // d/dA sum(A b) = 1 b^T, d/db = A^T 1.
  CHECK(a.grad.storage() == std::vector<double>{5, 6, 5, 6});
  CHECK(b.grad.storage() == std::vector<double>{4, 6});
}

TEST_CASE("backward requires a scalar output") {
  Parameter<double> a = random_param("a", 2, 2, 1);
  Tape<double> tape;
  CHECK_THROWS_AS(tape.backward(ad::relu(tape.parameter(a))), Error);
}

TEST_CASE("shape mismatches throw") {
  Tape<double> tape;
  const auto a = tape.constant(Tensor<double>::matrix(2, 3));
  const auto b = tape.constant(Tensor<double>::matrix(2, 2));
  CHECK_THROWS_AS(ad::matmul(a, a), Error);
  CHECK_THROWS_AS(ad::add(a, b), Error);
  CHECK_THROWS_AS(ad::reshape(a, 4, 2), Error);
  CHECK_THROWS_AS(ad::slice_cols(a, 2, 4), Error);
}

TEST_CASE("l1 loss value and subgradient at zero") {
  Parameter<double> a{"a", Tensor<double>({1, 4}, {1, -2, 3, 0.5}), {}};
  a.zero_grad();
  Tape<double> tape;
  const auto target = tape.constant(Tensor<double>({1, 4}, {1, 0, 0, 1}));
  const auto loss = ad::l1_loss(tape.parameter(a), target);
  CHECK(loss.value()[0] == doctest::Approx((0 + 2 + 3 + 0.5) / 4.0));
  tape.backward(loss);
  CHECK(a.grad.storage() == std::vector<double>{0, -0.25, 0.25, -0.25});
}

TEST_CASE("gather rows with padding gives zero rows and scatters gradients") {
  Parameter<double> x{"x", Tensor<double>({3, 2}, {1, 2, 3, 4, 5, 6}), {}};
  x.zero_grad();
  Tape<double> tape;
  const std::vector<Index> idx{2, -1, 2, 0};
  const auto g = ad::gather_rows(tape.parameter(x), std::span<const Index>(idx));
  CHECK(g.value().storage() == std::vector<double>{5, 6, 0, 0, 5, 6, 1, 2});
  tape.backward(ad::sum(g));
  CHECK(x.grad.storage() == std::vector<double>{1, 1, 0, 0, 2, 2});
}

TEST_CASE("softmax rows are normalised and stable for large logits") {
  const Tensor<double> p = softmax_rows(Tensor<double>({2, 3}, {1000, 1000, 1000, 0, std::log(2.0), 0}));
  CHECK(p(0, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(p(1, 1) == doctest::Approx(0.5));
  CHECK(p(1, 0) + p(1, 1) + p(1, 2) == doctest::Approx(1.0));
}

TEST_CASE("finite-difference gradient check over every op") {
  Parameter<double> a = random_param("a", 4, 3, 11);
  Parameter<double> b = random_param("b", 3, 5, 12);
  Parameter<double> c = random_param("c", 1, 5, 13);
  Parameter<double> d = random_param("d", 4, 5, 14);
  const std::vector<Index> idx{3, -1, 0, 2, 2, 1};
  const std::vector<int> labels{0, 4, 2, 1};
  CsrMatrix<double> q;
  q.rows = 3;
  q.cols = 2;
  q.row_ptr = {0, 1, 3, 4};
  q.col = {0, 0, 1, 1};
  q.weight = {1.0, 0.25, 0.75, 1.0};
  // The L1 target is offset so no residual sits at a kink.
  const Tensor<double> target = [] {
    Tensor<double> t = Tensor<double>::matrix(6, 5);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = 5.0 + 0.1 * static_cast<double>(i);
    return t;
  }();
  std::vector<Parameter<double>*> params{&a, &b, &c, &d};
  auto loss = [&](Tape<double>& tape) {
    auto va = tape.parameter(a), vb = tape.parameter(b), vc = tape.parameter(c), vd = tape.parameter(d);
    auto h = ad::add_row(ad::matmul(va, vb), vc);                 // 4x5
    auto s = ad::add(ad::mul(ad::tanh(h), ad::sigmoid(vd)), ad::scale(ad::sub(h, vd), 0.5));
    auto g = ad::gather_rows(s, std::span<const Index>(idx));     // 6x5
    auto r = ad::reshape(ad::transpose(g), 6, 5);
    auto stacked = ad::concat_rows<double>({ad::slice_rows(r, 0, 4), ad::slice_cols(ad::slice_rows(vd, 1, 3), 0, 5)});
    auto up = ad::sparse_matmul(q, ad::slice_rows(stacked, 0, 4));  // two blocks of 2 -> 6x5
    auto l1 = ad::l1_loss(ad::add(up, g), tape.constant(target));
    auto ce = ad::softmax_cross_entropy(h, std::span<const int>(labels));
    auto sq = ad::mean(ad::mul(ad::relu(ad::add_row(ad::scale(vd, 2.0), vc)), vd));
    return ad::add(ad::add(l1, ce), ad::add(sq, ad::mean(stacked)));
  };
  const GradCheckResult r = check_gradients(params, loss, 1e-6);
  INFO("worst " << r.worst);
  CHECK(r.coordinates == 12 + 15 + 5 + 20);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("gradient check catches a wrong derivative") {
  Parameter<double> a = random_param("a", 2, 2, 21, 0.5, 1.0);
  std::vector<Parameter<double>*> params{&a};
  auto wrong = [&](Tape<double>& tape) {
    auto x = tape.parameter(a);
    // Forward squares the input, backward claims the derivative is 1.
    Tensor<double> v = x.value();
    for (double& e : v.storage()) e = e * e;
    auto y = tape.record(std::move(v), {x.id}, [xid = x.id](Tape<double>& t, std::size_t self) {
      const Tensor<double> g = t.grad(self);
      Tensor<double>& gx = t.grad(xid);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
    return ad::sum(y);
  };
  CHECK(check_gradients(params, wrong).max_relative_error > 0.1);
}

TEST_CASE("adam takes a bias-corrected first step of size lr") {
  Parameter<double> p{"p", Tensor<double>({1, 3}, {1.0, -2.0, 0.5}), Tensor<double>({1, 3}, {0.3, -4.0, 1e-3})};
  AdamState<double> state;
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  std::vector<Parameter<double>*> params{&p};
  CHECK(adam_step<double>(params, state, cfg) == StepStatus::Applied);
  CHECK(state.step == 1);
  CHECK(p.value[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p.value[1] == doctest::Approx(-1.9).epsilon(1e-6));
  CHECK(p.value[2] == doctest::Approx(0.4).epsilon(1e-4));
}

TEST_CASE("adam weight decay is folded into the gradient") {
  Parameter<double> p{"p", Tensor<double>({1, 1}, {2.0}), Tensor<double>({1, 1}, {0.0})};
  AdamState<double> state;
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.weight_decay = 0.5;
  std::vector<Parameter<double>*> params{&p};
  adam_step<double>(params, state, cfg);
  CHECK(p.value[0] == doctest::Approx(1.99).epsilon(1e-6));
}

TEST_CASE("adam rejects a non-finite gradient and leaves state untouched") {
  Parameter<double> p{"p", Tensor<double>({1, 2}, {1.0, 2.0}), Tensor<double>({1, 2}, {0.1, 0.1})};
  Parameter<double> q{"q", Tensor<double>({1, 1}, {3.0}),
                      Tensor<double>({1, 1}, {std::numeric_limits<double>::quiet_NaN()})};
  AdamState<double> state;
  std::vector<Parameter<double>*> params{&p, &q};
  CHECK(adam_step<double>(params, state, {}) == StepStatus::RejectedNonFinite);
  CHECK(state.step == 0);
  CHECK(p.value.storage() == std::vector<double>{1.0, 2.0});
  CHECK(q.value[0] == 3.0);
}

TEST_CASE("float tape agrees with double tape") {
  Parameter<double> a = random_param("a", 3, 4, 5);
  Parameter<float> af{"a", a.value.cast<float>(), {}};
  af.zero_grad();
  Tape<double> td;
  Tape<float> tf;
  const auto ld = ad::mean(ad::tanh(ad::matmul(td.parameter(a), ad::transpose(td.parameter(a)))));
  const auto lf = ad::mean(ad::tanh(ad::matmul(tf.parameter(af), ad::transpose(tf.parameter(af)))));
  CHECK(lf.value()[0] == doctest::Approx(ld.value()[0]).epsilon(1e-5));
  td.backward(ld);
  tf.backward(lf);
  for (std::size_t i = 0; i < a.grad.size(); ++i) CHECK(af.grad[i] == doctest::Approx(a.grad[i]).epsilon(1e-4));
}
