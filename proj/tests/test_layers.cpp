#include <doctest.h>

#include <cmath>
#include <random>

#include "meshmotion/layers.hpp"
#include "meshmotion/primitives.hpp"

using namespace meshmotion;

namespace {

Parameter<double> random_param(std::string name, std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 0.5);
  Parameter<double> p{std::move(name), Tensor<double>::matrix(r, c), {}};
  for (double& v : p.value.storage()) v = g(rng);
  p.zero_grad();
  return p;
}

// Literal loop over the spiral definition.
Tensor<double> spiral_conv_loop(const Tensor<double>& f, const SpiralTable& t, const Tensor<double>& w,
                                const Tensor<double>& b) {
  const std::size_t n = static_cast<std::size_t>(t.num_vertices()), d_in = f.cols(), d_out = w.cols();
  const std::size_t frames = f.rows() / n;
  Tensor<double> out = Tensor<double>::matrix(f.rows(), d_out);
  for (std::size_t fr = 0; fr < frames; ++fr) {
    for (std::size_t v = 0; v < n; ++v) {
      for (std::size_t o = 0; o < d_out; ++o) {
        double acc = b[o];
        for (Index j = 0; j < t.length; ++j) {
          const Index u = t.row(static_cast<Index>(v))[j];
          if (u == kPad) continue;
          for (std::size_t i = 0; i < d_in; ++i)
            acc += f(fr * n + static_cast<std::size_t>(u), i) * w(static_cast<std::size_t>(j) * d_in + i, o);
        }
        out(fr * n + v, o) = acc;
      }
    }
  }
  return out;
}

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("spiral conv on the fan with identity weights copies the spiral") {
  const SpiralTable t = build_spiral_table(make_fan(6), 1, 7, 1);
  Tensor<double> f = Tensor<double>::matrix(7, 1);
  for (std::size_t v = 0; v < 7; ++v) f[v] = 10.0 + static_cast<double>(v);
  Tensor<double> w = Tensor<double>::matrix(7, 7);
  for (std::size_t j = 0; j < 7; ++j) w(j, j) = 1.0;
  Tape<double> tape;
  const auto out = spiral_conv(tape.constant(f), t, tape.constant(w), tape.constant(Tensor<double>::matrix(1, 7)));
  for (std::size_t j = 0; j < 7; ++j) CHECK(out.value()(0, j) == 10.0 + static_cast<double>(j));
}

TEST_CASE("spiral conv matches the literal loop on stacked frames") {
  const Mesh m = make_face_patch(9, 10);
  const SpiralTable t = build_spiral_table(m, 1, 0, default_reference_vertex(m));
  std::mt19937_64 rng(7);
  const std::size_t frames = 3, d_in = 4, d_out = 5;
  auto f = random_param("f", frames * static_cast<std::size_t>(m.num_vertices()), d_in, rng);
  auto w = random_param("w", static_cast<std::size_t>(t.length) * d_in, d_out, rng);
  auto b = random_param("b", 1, d_out, rng);
  Tape<double> tape;
  const auto out = spiral_conv(tape.parameter(f), t, tape.parameter(w), tape.parameter(b));
  const Tensor<double> expected = spiral_conv_loop(f.value, t, w.value, b.value);
  REQUIRE(out.value().shape() == expected.shape());
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(std::abs(out.value()[i] - expected[i]) <= 1e-9);
}

TEST_CASE("spiral conv, unpool, dense and lstm pass a gradient check") {
  const Mesh fine = make_icosphere(1, 2.0);
  const SamplingHierarchy h = build_hierarchy(fine, {3});
  const SpiralTable t = build_spiral_table(h.levels[1], 1, 0, default_reference_vertex(h.levels[1]));
  const CsrMatrix<double> q = to_csr<double>(h.up[0]);
  const std::size_t nc = static_cast<std::size_t>(h.levels[0].num_vertices());
  std::mt19937_64 rng(9);
  auto x = random_param("x", 2, 3, rng);
  auto w_ih = random_param("w_ih", 16, 3, rng);
  auto w_hh = random_param("w_hh", 16, 4, rng);
  auto bl = random_param("bl", 1, 16, rng);
  auto wd = random_param("wd", nc * 2, 4, rng);
  auto bd = random_param("bd", 1, nc * 2, rng);
  auto wc = random_param("wc", static_cast<std::size_t>(t.length) * 2, 3, rng);
  auto bc = random_param("bc", 1, 3, rng);
  std::vector<Parameter<double>*> params{&x, &w_ih, &w_hh, &bl, &wd, &bd, &wc, &bc};
  auto loss = [&](Tape<double>& tape) {
    LstmState<double> s{tape.constant(Tensor<double>::matrix(1, 4)), tape.constant(Tensor<double>::matrix(1, 4))};
    auto vx = tape.parameter(x);
    auto wi = tape.parameter(w_ih), wh = tape.parameter(w_hh), vb = tape.parameter(bl);
    for (std::size_t step = 0; step < 2; ++step) s = lstm_step(ad::slice_rows(vx, step, step + 1), s, wi, wh, vb);
    auto coarse = ad::reshape(dense(s.h, tape.parameter(wd), tape.parameter(bd)), nc, 2);
    auto up = unpool(coarse, q);
    auto out = spiral_conv(up, t, tape.parameter(wc), tape.parameter(bc));
    return ad::mean(ad::mul(out, out));
  };
  const GradCheckResult r = check_gradients(params, loss, 1e-6);
  INFO("worst " << r.worst);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("lstm cell matches a hand computation") {
  // Hidden size 1, all weights 0.5, zero bias, x = 1, zero initial state.
  Tape<double> tape;
  LstmState<double> s{tape.constant(Tensor<double>::matrix(1, 1)), tape.constant(Tensor<double>::matrix(1, 1))};
  const auto x = tape.constant(Tensor<double>({1, 1}, {1.0}));
  const auto wi = tape.constant(Tensor<double>({4, 1}, {0.5, 0.5, 0.5, 0.5}));
  const auto wh = tape.constant(Tensor<double>({4, 1}, {0.5, 0.5, 0.5, 0.5}));
  const auto b = tape.constant(Tensor<double>::matrix(1, 4));
  s = lstm_step(x, s, wi, wh, b);
  const double c1 = sigm(0.5) * std::tanh(0.5);
  const double h1 = sigm(0.5) * std::tanh(c1);
  CHECK(s.c.value()[0] == doctest::Approx(c1).epsilon(1e-12));
  CHECK(s.h.value()[0] == doctest::Approx(h1).epsilon(1e-12));
  s = lstm_step(x, s, wi, wh, b);
  const double a = 0.5 + 0.5 * h1;
  const double c2 = sigm(a) * c1 + sigm(a) * std::tanh(a);
  CHECK(s.c.value()[0] == doctest::Approx(c2).epsilon(1e-12));
  CHECK(s.h.value()[0] == doctest::Approx(sigm(a) * std::tanh(c2)).epsilon(1e-12));
}

TEST_CASE("stacked spiral indices offset frames and keep padding") {
  const SpiralTable t = build_spiral_table(make_fan(6), 1, 8, 1);
  const auto idx = stacked_spiral_indices(t, 2);
  REQUIRE(idx.size() == 2 * 7 * 8);
  CHECK(idx[7 * 8] == 7);
  CHECK(idx[7 * 8 + 7] == kPad);
  CHECK(idx[7] == kPad);
}

TEST_CASE("spiral conv rejects a mismatched weight") {
  const SpiralTable t = build_spiral_table(make_fan(6), 1, 7, 1);
  Tape<double> tape;
  CHECK_THROWS_AS(spiral_conv(tape.constant(Tensor<double>::matrix(7, 2)), t,
                              tape.constant(Tensor<double>::matrix(7, 3)), tape.constant(Tensor<double>::matrix(1, 3))),
                  Error);
}
