#include <doctest.h>

#include <cmath>
#include <cstring>

#include "contramod/nn/checkpoint.hpp"
#include "contramod/nn/optim.hpp"
#include "support.hpp"

using namespace contramod;
using namespace contramod::nn;

TEST_CASE("cosine schedule endpoints and midpoint") {
  const CosineSchedule s{1e-4, 1000};
  CHECK(s(0) == doctest::Approx(1e-4).epsilon(1e-15));
  CHECK(s(500) == doctest::Approx(5e-5).epsilon(1e-12));
  CHECK(s(1000) == 0.0);
  CHECK(s(5000) == 0.0);
  for (std::size_t t = 1; t <= 1000; ++t) CHECK(s(t) <= s(t - 1));
  const CosineSchedule flat{3e-3, 0};
  CHECK(flat(0) == 3e-3);
  CHECK(flat(123456) == 3e-3);
}

TEST_CASE("adam matches a hand-computed trajectory") {
  ParameterTree<double> p;
  Mat<double> w(1, 2);
  w << 1.0, -2.0;
  const auto id = p.add("w", {2}, w);
  Adam<double> opt(p, CosineSchedule{0.1, 0});
  double m[2] = {0, 0}, v[2] = {0, 0}, x[2] = {1.0, -2.0};
  for (int step = 1; step <= 5; ++step) {
    GradBuffer<double> g(1);
    Mat<double> grad(1, 2);
    grad << 2 * x[0], std::sin(x[1]);
    g.accumulate(id, grad);
    const double gs[2] = {2 * x[0], std::sin(x[1])};
    opt.step(p, g);
    for (int k = 0; k < 2; ++k) {
      m[k] = 0.9 * m[k] + 0.1 * gs[k];
      v[k] = 0.999 * v[k] + 0.001 * gs[k] * gs[k];
      const double mh = m[k] / (1 - std::pow(0.9, step));
      const double vh = v[k] / (1 - std::pow(0.999, step));
      x[k] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      CHECK(p.value(id)(0, k) == doctest::Approx(x[k]).epsilon(1e-12));
    }
  }
  CHECK(opt.steps() == 5);
}

TEST_CASE("adam skips masked and gradient-free parameters") {
  ParameterTree<float> p;
  const auto a = p.add("a", {1}, Mat<float>::Ones(1, 1));
  const auto b = p.add("b", {1}, Mat<float>::Ones(1, 1));
  const auto c = p.add("c", {1}, Mat<float>::Ones(1, 1));
  Adam<float> opt(p, CosineSchedule{0.1, 10});
  GradBuffer<float> g(3);
  g.accumulate(a, Mat<float>::Ones(1, 1));
  g.accumulate(b, Mat<float>::Ones(1, 1));
  opt.step(p, g, TrainableMask{true, false, true});
  CHECK(p.value(a)(0, 0) < 1.0f);
  CHECK(p.value(b)(0, 0) == 1.0f);
  CHECK(p.value(c)(0, 0) == 1.0f);
}

TEST_CASE("parameter tree bookkeeping") {
  ParameterTree<float> p;
  p.add("enc/a", {2, 3}, Mat<float>::Zero(2, 3));
  p.add("enc/b", {3}, Mat<float>::Zero(1, 3));
  p.add("head/a", {4}, Mat<float>::Zero(1, 4));
  CHECK_THROWS(p.add("enc/a", {1}, Mat<float>::Zero(1, 1)));
  CHECK_THROWS(p.add("bad", {2, 2}, Mat<float>::Zero(1, 4)));
  CHECK(p.scalar_count() == 13);
  CHECK(p.with_prefix("enc/").size() == 2);
  CHECK(mask_for_prefixes(p, {"head/"}) == TrainableMask{false, false, true});
  CHECK_THROWS_AS(p.at("missing"), Error);
}

TEST_CASE("checkpoint roundtrip and corruption") {
  CounterRng rng(1);
  ParameterTree<float> p;
  p.add("encoder/conv1/kernel", {3, 2, 4}, testing::random_mat(6, 4, rng).cast<float>());
  p.add("encoder/conv1/bias", {4}, testing::random_mat(1, 4, rng).cast<float>());
  p.add("head/dense1/kernel", {4, 2}, testing::random_mat(4, 2, rng).cast<float>());
  const auto bytes = encode_checkpoint(p);
  const auto back = decode_checkpoint(bytes);
  REQUIRE(back.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& a = p[ParamId{k}];
    const auto& b = back[ParamId{k}];
    CHECK(a.name == b.name);
    CHECK(a.shape == b.shape);
    CHECK(std::memcmp(a.value.data(), b.value.data(), a.value.size() * sizeof(float)) == 0);
  }
  CHECK(encode_checkpoint(back) == bytes);
  CHECK(decode_checkpoint(encode_checkpoint(p, "encoder/")).size() == 2);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_WITH(decode_checkpoint(bad), doctest::Contains("bad magic"));
  bad = bytes;
  bad[bad.size() / 2] ^= 1;
  CHECK_THROWS_WITH(decode_checkpoint(bad), doctest::Contains("checksum mismatch"));
  bad = bytes;
  bad.resize(bytes.size() - 9);
  CHECK_THROWS(decode_checkpoint(bad));

  testing::TempDir tmp("ckpt");
  save_checkpoint(p, tmp / "m.ckpt");
  CHECK(encode_checkpoint(load_checkpoint(tmp / "m.ckpt")) == bytes);
}
