#include <doctest.h>

#include <cmath>

#include "contramod/nn/tape.hpp"
#include "support.hpp"

using namespace contramod;
using namespace contramod::nn;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("conv1d shapes and padding") {
  ParameterTree<double> p;
  CounterRng rng(1);
  const auto w = p.add("w", {24, 2, 32}, testing::random_mat(48, 32, rng));
  const auto b = p.add("b", {32}, Mat<double>::Zero(1, 32));
  Tape<double> t(p, Mode::Inference);
  const auto x = t.input(testing::random_mat(128, 2, rng), 1);
  const auto y = t.conv1d(x, w, b);
  CHECK(t.value(y).rows() == 128);
  CHECK(t.value(y).cols() == 32);

  // Long kernels and channel mismatches are rejected.
  const auto big = p.add("big", {200, 2, 1}, Mat<double>::Zero(400, 1));
  const auto bb = p.add("bb", {1}, Mat<double>::Zero(1, 1));
  Tape<double> t2(p, Mode::Inference);
  CHECK_THROWS(t2.conv1d(t2.input(testing::random_mat(128, 2, rng), 1), big, bb));
  CHECK_THROWS(t2.conv1d(t2.input(testing::random_mat(128, 3, rng), 1), w, b));
}

TEST_CASE("conv1d with zero weights is zero") {
  ParameterTree<double> p;
  CounterRng rng(2);
  const auto w = p.add("w", {5, 2, 4}, Mat<double>::Zero(10, 4));
  const auto b = p.add("b", {4}, Mat<double>::Zero(1, 4));
  Tape<double> t(p, Mode::Inference);
  const auto y = t.conv1d(t.input(testing::random_mat(3 * 20, 2, rng), 3), w, b);
  CHECK(t.value(y).isZero(0.0));
}

TEST_CASE("conv1d against direct evaluation") {
  SUBCASE("K=1 weighted channel sum on three samples") {
    ParameterTree<double> p;
    Mat<double> wv(2, 1);
    wv << 0.5, -2.0;
    const auto w = p.add("w", {1, 2, 1}, wv);
    Mat<double> bv(1, 1);
    bv << 0.25;
    const auto b = p.add("b", {1}, bv);
    Mat<double> x(3, 2);
    x << 1, 2, 3, 4, -1, 0.5;
    Tape<double> t(p, Mode::Inference);
    const auto& y = t.value(t.conv1d(t.input(x, 1), w, b));
    CHECK(y(0, 0) == doctest::Approx(0.5 * 1 - 2.0 * 2 + 0.25));
    CHECK(y(1, 0) == doctest::Approx(0.5 * 3 - 2.0 * 4 + 0.25));
    CHECK(y(2, 0) == doctest::Approx(0.5 * -1 - 2.0 * 0.5 + 0.25));
  }
  SUBCASE("random K, channels and batch vs nested loops with same padding") {
    CounterRng rng(3);
    for (int K : {1, 2, 3, 4, 8}) {
      const int cin = 3, cout = 2, L = 9, B = 2;
      ParameterTree<double> p;
      const auto wv = testing::random_mat(K * cin, cout, rng);
      const auto bv = testing::random_mat(1, cout, rng);
      const auto w = p.add("w", {std::size_t(K), cin, cout}, wv);
      const auto b = p.add("b", {cout}, bv);
      const auto x = testing::random_mat(L * B, cin, rng);
      Tape<double> t(p, Mode::Inference);
      const auto& y = t.value(t.conv1d(t.input(x, B), w, b));
      const int left = (K - 1) / 2;
      for (int bi = 0; bi < B; ++bi)
        for (int tt = 0; tt < L; ++tt)
          for (int o = 0; o < cout; ++o) {
            double acc = bv(0, o);
            for (int k = 0; k < K; ++k) {
              const int src = tt + k - left;
              if (src < 0 || src >= L) continue;
              for (int c = 0; c < cin; ++c) acc += x(src * B + bi, c) * wv(k * cin + c, o);
            }
            CHECK(y(tt * B + bi, o) == doctest::Approx(acc).epsilon(1e-12));
          }
    }
  }
}

TEST_CASE("lstm") {
  SUBCASE("zero weights give a zero hidden sequence") {
    ParameterTree<double> p;
    const auto wx = p.add("k", {32, 512}, Mat<double>::Zero(32, 512));
    const auto wh = p.add("r", {128, 512}, Mat<double>::Zero(128, 512));
    const auto b = p.add("b", {512}, Mat<double>::Zero(1, 512));
    CounterRng rng(4);
    Tape<double> t(p, Mode::Inference);
    const auto y = t.lstm(t.input(testing::random_mat(128, 32, rng), 1), wx, wh, b);
    CHECK(t.value(y).rows() == 128);
    CHECK(t.value(y).cols() == 128);
    CHECK(t.value(y).isZero(0.0));
  }
  SUBCASE("one step and two steps against hand evaluation") {
    CounterRng rng(5);
    const int F = 3, U = 2;
    ParameterTree<double> p;
    const auto Wx = testing::random_mat(F, 4 * U, rng), Wh = testing::random_mat(U, 4 * U, rng);
    const auto bias = testing::random_mat(1, 4 * U, rng);
    const auto wx = p.add("k", {F, 4 * U}, Wx);
    const auto wh = p.add("r", {U, 4 * U}, Wh);
    const auto b = p.add("b", {4 * U}, bias);
    const auto x = testing::random_mat(2, F, rng);
    Tape<double> t(p, Mode::Inference);
    const auto& y = t.value(t.lstm(t.input(x, 1), wx, wh, b));

    std::vector<double> h(U, 0.0), c(U, 0.0);
    for (int step = 0; step < 2; ++step) {
      std::vector<double> nh(U), nc(U);
      for (int u = 0; u < U; ++u) {
        double z[4];
        for (int g = 0; g < 4; ++g) {
          z[g] = bias(0, g * U + u);
          for (int f = 0; f < F; ++f) z[g] += x(step, f) * Wx(f, g * U + u);
          for (int v = 0; v < U; ++v) z[g] += h[v] * Wh(v, g * U + u);
        }
        const double ig = sigmoid(z[0]), fg = sigmoid(z[1]), gg = std::tanh(z[2]), og = sigmoid(z[3]);
        nc[u] = fg * c[u] + ig * gg;
        nh[u] = og * std::tanh(nc[u]);
      }
      h = nh;
      c = nc;
      for (int u = 0; u < U; ++u) CHECK(std::abs(y(step, u) - h[u]) < 1e-12);
    }
  }
}

TEST_CASE("global max pool") {
  ParameterTree<double> p;
  Tape<double> t(p);
  Mat<double> x(3, 2);
  x << -1, 4, 3, 4, 2, 4;
  const auto in = t.input(x, 1, true);
  const auto y = t.global_max_pool(in);
  CHECK(t.value(y)(0, 0) == 3);
  CHECK(t.value(y)(0, 1) == 4);
  Mat<double> seed(1, 2);
  seed << 1.5, 2.0;
  GradBuffer<double> g(p.size());
  t.backward(y, seed, g);
  Mat<double> expected = Mat<double>::Zero(3, 2);
  expected(1, 0) = 1.5;
  expected(0, 1) = 2.0;  // constant channel: first occurrence wins
  CHECK(t.grad(in) == expected);
}

TEST_CASE("softmax cross-entropy") {
  ParameterTree<double> p;
  Tape<double> t(p);
  const auto z = t.input(Mat<double>::Constant(4, 11, 0.7), 4);
  const std::vector<int> labels{0, 3, 10, 5};
  CHECK(t.value(t.softmax_cross_entropy(z, labels))(0, 0) == doctest::Approx(std::log(11.0)).epsilon(1e-14));
  const std::vector<int> bad{0, 3, 11, 5};
  CHECK_THROWS_AS(t.softmax_cross_entropy(z, bad), Error);
  Mat<double> big(1, 3);
  big << 1000, 0, -1000;
  const std::vector<int> one{1};
  CHECK(t.value(t.softmax_cross_entropy(t.input(big, 1), one))(0, 0) == doctest::Approx(1000.0));
}

TEST_CASE("dropout") {
  ParameterTree<double> p;
  CounterRng rng(6), rng2(6);
  const auto x = testing::random_mat(50, 40, rng);
  Tape<double> t(p);
  const auto in = t.input(x, 50);
  CHECK(t.value(t.dropout(in, 0.0, rng2)) == x);
  Tape<double> ti(p, Mode::Inference);
  CHECK(ti.value(ti.dropout(ti.input(x, 50), 0.5, rng2)) == x);
  const auto& y = t.value(t.dropout(in, 0.5, rng2));
  int kept = 0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    if (y.data()[k] != 0) {
      ++kept;
      CHECK(y.data()[k] == doctest::Approx(2 * x.data()[k]));
    }
  }
  CHECK(std::abs(kept / double(x.size()) - 0.5) < 0.05);
  CHECK_THROWS(t.dropout(in, 1.0, rng2));
}

TEST_CASE("l2 penalty and the w^2 example") {
  ParameterTree<double> p;
  Mat<double> w(1, 1);
  w << 3.0;
  const auto id = p.add("w", {1}, w);
  std::vector<ParamId> ids{id};
  {
    Tape<double> t(p);
    CHECK(t.value(t.l2_penalty(ids, 0.0))(0, 0) == 0.0);
  }
  Tape<double> t(p);
  const auto loss = t.l2_penalty(ids, 1.0);
  CHECK(t.value(loss)(0, 0) == 9.0);
  GradBuffer<double> g(p.size());
  t.backward(loss, g);
  CHECK(g[id](0, 0) == 6.0);
}

TEST_CASE("tape misuse") {
  ParameterTree<double> p;
  Mat<double> w(1, 1);
  w << 3.0;
  const auto id = p.add("w", {1}, w);
  std::vector<ParamId> ids{id};
  Tape<double> t(p);
  GradBuffer<double> g(p.size());
  CHECK_THROWS(t.backward(Var{}, g));
  const auto loss = t.l2_penalty(ids, 1.0);
  t.backward(loss, g);
  CHECK_THROWS(t.backward(loss, g));
  CHECK_THROWS(t.input(Mat<double>::Zero(5, 2), 2));

  // Frozen parameters get no gradient.
  Tape<double> frozen(p, Mode::Train, TrainableMask{false});
  GradBuffer<double> g2(p.size());
  frozen.backward(frozen.l2_penalty(ids, 1.0), g2);
  CHECK_FALSE(g2.has(id));
}
