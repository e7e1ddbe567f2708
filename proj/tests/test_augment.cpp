#include <doctest.h>

#include <array>
#include <cmath>

#include "contramod/augment.hpp"
#include "support.hpp"

using namespace contramod;

namespace {

IQFrame single(float i, float q) {
  IQFrame f(1);
  f.i(0) = i;
  f.q(0) = q;
  return f;
}

// Rotation evaluated with the trigonometric formula in double precision.
std::pair<double, double> rotate_reference(double i, double q, int quarter_turns) {
  const double th = quarter_turns * std::numbers::pi / 2;
  const double c = std::round(std::cos(th)), s = std::round(std::sin(th));
  return {i * c - q * s, i * s + q * c};
}

}  // namespace

TEST_CASE("rotation examples") {
  const auto r90 = rotate(single(1, 2), RotationAngle::Deg90);
  CHECK(r90.i(0) == -2.0f);
  CHECK(r90.q(0) == 1.0f);
  const auto r180 = rotate(single(1, 2), RotationAngle::Deg180);
  CHECK(r180.i(0) == -1.0f);
  CHECK(r180.q(0) == -2.0f);
  const auto r270 = rotate(single(1, 2), RotationAngle::Deg270);
  CHECK(r270.i(0) == 2.0f);
  CHECK(r270.q(0) == -1.0f);
  CounterRng rng(1);
  const auto f = testing::random_frame(128, rng);
  CHECK(rotate(f, RotationAngle::Deg0) == f);
  CHECK(radians(RotationAngle::Deg270) == doctest::Approx(3 * std::numbers::pi / 2));
}

TEST_CASE("rotation matches the trigonometric formula on random frames") {
  CounterRng rng(2);
  for (int n = 0; n < 200; ++n) {
    const auto f = testing::random_frame(32, rng);
    for (auto a : kRotationAngles) {
      const auto r = rotate(f, a);
      for (std::size_t t = 0; t < 32; ++t) {
        const auto [ri, rq] = rotate_reference(f.i(t), f.q(t), static_cast<int>(a));
        CHECK(double(r.i(t)) == ri);
        CHECK(double(r.q(t)) == rq);
      }
    }
  }
}

TEST_CASE("rotation is an exact isometry with a cyclic group law") {
  CounterRng rng(3);
  for (int n = 0; n < 1000; ++n) {
    const auto f = testing::random_frame(128, rng);
    for (auto a : kRotationAngles) {
      const auto ra = rotate(f, a);
      CHECK(frame_rms(ra) == frame_rms(f));
      for (std::size_t t = 0; t < 128; ++t) {
        const double before = double(f.i(t)) * f.i(t) + double(f.q(t)) * f.q(t);
        const double after = double(ra.i(t)) * ra.i(t) + double(ra.q(t)) * ra.q(t);
        REQUIRE(before == after);
      }
      for (auto b : kRotationAngles) REQUIRE(rotate(ra, b) == rotate(f, compose(a, b)));
      REQUIRE(rotate(ra, inverse(a)) == f);
      REQUIRE(normalize(ra) == rotate(normalize(f), a));
    }
  }
}

TEST_CASE("angle draws are uniform") {
  CounterRng rng(4);
  std::array<int, 4> counts{};
  for (int k = 0; k < 10000; ++k) ++counts[static_cast<int>(draw_angle(rng))];
  for (int c : counts) CHECK(std::abs(c / 10000.0 - 0.25) <= 0.02);
}

TEST_CASE("view pairs") {
  CounterRng src(5);
  const auto f = testing::random_frame(64, src);
  CounterRng a(77), b(77);
  const auto p = make_pair(f, a, 3);
  const auto q = make_pair(f, b, 3);
  CHECK(p.view_i == q.view_i);
  CHECK(p.view_j == q.view_j);
  CHECK(p.source_index == 3);
  CHECK(p.view_i == rotate(f, p.theta_i));
  CHECK(p.view_j == rotate(f, p.theta_j));

  // Find a seed whose two draws are both zero; both views then equal the source.
  bool found = false;
  for (std::uint64_t s = 0; s < 200 && !found; ++s) {
    CounterRng probe(s);
    const auto pair = make_pair(f, probe);
    if (pair.theta_i == RotationAngle::Deg0 && pair.theta_j == RotationAngle::Deg0) {
      CHECK(pair.view_i == f);
      CHECK(pair.view_j == f);
      found = true;
    }
  }
  CHECK(found);
}
