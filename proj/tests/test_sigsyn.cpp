#include <doctest.h>

#include <cmath>
#include <complex>
#include <numeric>

#include "contramod/sigsyn.hpp"
#include "support.hpp"

using namespace contramod;

TEST_CASE("scheme codes, names and aliases") {
  for (int c = 0; c < kNumSchemes; ++c) CHECK(code(scheme_from_code(c)) == c);
  CHECK_THROWS_WITH(scheme_from_code(11), doctest::Contains("unknown scheme"));
  CHECK_THROWS_WITH(scheme_from_code(-1), doctest::Contains("unknown scheme"));
  CHECK(parse_scheme("8psk") == ModulationScheme::PSK8);
  CHECK(parse_scheme("QAM16") == ModulationScheme::QAM16);
  CHECK(parse_scheme("16-qam") == ModulationScheme::QAM16);
  CHECK(parse_scheme("PAM4") == ModulationScheme::PAM4);
  CHECK(parse_scheme("WBFM") == ModulationScheme::WBFM);
  CHECK(parse_scheme("AM-SSB") == ModulationScheme::AM_SSB);
  CHECK_THROWS(parse_scheme("OOK"));
  for (auto s : kAllSchemes) CHECK(parse_scheme(scheme_name(s)) == s);
  CHECK(is_digital(ModulationScheme::CPFSK));
  CHECK_FALSE(is_digital(ModulationScheme::WBFM));
}

TEST_CASE("BPSK maps 0 to +1 and 1 to -1") {
  const std::vector<std::uint8_t> bits{0, 1};
  const auto sym = map_bits(ModulationScheme::BPSK, bits);
  REQUIRE(sym.size() == 2);
  CHECK(sym[0] == Complex(1, 0));
  CHECK(sym[1] == Complex(-1, 0));
}

TEST_CASE("QAM16 points average unit power") {
  // Enumerate the raw 16 grid points and scale independently of the library.
  double raw = 0;
  for (int a : {-3, -1, 1, 3})
    for (int b : {-3, -1, 1, 3}) raw += a * a + b * b;
  const double scale = std::sqrt(raw / 16.0);
  const auto& pts = constellation(ModulationScheme::QAM16);
  REQUIRE(pts.size() == 16);
  double power = 0;
  for (const auto& p : pts) {
    power += std::norm(p);
    const double re = p.real() * scale, im = p.imag() * scale;
    CHECK(std::abs(re - std::round(re)) < 1e-12);
    CHECK(std::abs(im - std::round(im)) < 1e-12);
  }
  CHECK(std::abs(power / 16.0 - 1.0) < 1e-9);
}

TEST_CASE("every digital alphabet has unit average power and distinct points") {
  for (auto s : kAllSchemes) {
    if (!is_digital(s)) {
      CHECK(constellation(s).empty());
      continue;
    }
    const auto& pts = constellation(s);
    CHECK(pts.size() == (std::size_t{1} << bits_per_symbol(s)));
    double power = 0;
    for (const auto& p : pts) power += std::norm(p);
    CHECK(std::abs(power / pts.size() - 1.0) < 1e-9);
    for (std::size_t a = 0; a < pts.size(); ++a)
      for (std::size_t b = a + 1; b < pts.size(); ++b) CHECK(std::abs(pts[a] - pts[b]) > 1e-6);
  }
}

TEST_CASE("Gray mapping: neighbouring QPSK and 8PSK points differ in one bit") {
  for (auto s : {ModulationScheme::QPSK, ModulationScheme::PSK8}) {
    const auto& pts = constellation(s);
    const std::size_t m = pts.size();
    for (std::size_t a = 0; a < m; ++a) {
      // nearest neighbours by angle
      double best = 1e9;
      for (std::size_t b = 0; b < m; ++b)
        if (b != a) best = std::min(best, std::abs(pts[a] - pts[b]));
      for (std::size_t b = 0; b < m; ++b)
        if (b != a && std::abs(std::abs(pts[a] - pts[b]) - best) < 1e-9) CHECK(std::popcount(a ^ b) == 1);
    }
  }
}

TEST_CASE("modulate is deterministic, unit power and frame sized") {
  for (auto s : kAllSchemes) {
    for (auto shape : {PulseShape::Rect, PulseShape::RootRaisedCosine}) {
      CounterRng a(99), b(99);
      const auto x = modulate(s, 128, 8, a, shape);
      const auto y = modulate(s, 128, 8, b, shape);
      REQUIRE(x.samples.size() == 128);
      CHECK(x.samples == y.samples);
      double p = 0;
      for (const auto& v : x.samples) p += std::norm(v);
      CHECK(std::abs(p / 128 - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("noise power follows the SNR definition") {
  CHECK(noise_power(1.0, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(noise_power(1.0, 10.0) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(noise_power(4.0, -3.0) == doctest::Approx(4.0 * std::pow(10.0, 0.3)).epsilon(1e-15));
}

TEST_CASE("measured SNR over 10000 frames at 6 dB") {
  double signal = 0, noise = 0;
  for (int k = 0; k < 10000; ++k) {
    CounterRng rng(derive_seed(1, "snr-test", {k}));
    const auto clean = modulate(ModulationScheme::QPSK, 128, 8, rng);
    const auto noisy = apply_channel(clean.samples, {1.0, 6.0, derive_seed(2, "noise", {k})});
    for (std::size_t t = 0; t < 128; ++t) {
      signal += std::norm(clean.samples[t]);
      noise += std::norm(Complex(noisy.i(t), noisy.q(t)) - clean.samples[t]);
    }
  }
  const double measured = 10.0 * std::log10(signal / noise);
  CHECK(std::abs(measured - 6.0) < 0.3);
}

TEST_CASE("channel gain scales the signal and noise follows the clean power") {
  std::vector<Complex> sig(128, Complex(1.0, 0.0));
  const auto f = apply_channel(sig, {2.0, 200.0, 1});
  for (std::size_t t = 0; t < 128; ++t) {
    CHECK(f.i(t) == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(std::abs(f.q(t)) < 1e-6);
  }
  sig[3] = Complex(std::nan(""), 0);
  CHECK_THROWS(apply_channel(sig, {1.0, 0.0, 1}));
}

TEST_CASE("generated cells: sizes, labels and determinism") {
  SynthSpec spec;
  spec.schemes = {ModulationScheme::PAM4};
  spec.snrs_db = {4};
  spec.frames_per_cell = 3;
  const auto d = generate_dataset(spec);
  CHECK(d.size() == 3);
  for (int l : d.labels) CHECK(l == code(ModulationScheme::PAM4));
  for (int s : d.snrs_db) CHECK(s == 4);

  spec.schemes = {ModulationScheme::BPSK, ModulationScheme::WBFM, ModulationScheme::AM_SSB};
  spec.snrs_db = {-20, 0, 18};
  spec.frames_per_cell = 5;
  const auto a = generate_dataset(spec);
  spec.jobs = 3;
  const auto b = generate_dataset(spec);
  CHECK(a.size() == 45);
  CHECK(encode_iqd(a) == encode_iqd(b));
  for (const auto& f : a.frames) CHECK(f.all_finite());

  // A cell does not depend on the other cells in the spec.
  const auto alone = generate_cell(spec, ModulationScheme::WBFM, 0);
  // WBFM is the second scheme and 0 dB the second SNR: cell 1*3+1, frame 2.
  CHECK(alone[2] == a.frames[(1 * 3 + 1) * 5 + 2]);
  spec.master_seed = 1;
  CHECK(encode_iqd(generate_dataset(spec)) != encode_iqd(a));
}

TEST_CASE("default SNR grid") {
  const auto s = SynthSpec::default_snrs();
  REQUIRE(s.size() == 20);
  CHECK(s.front() == -20);
  CHECK(s.back() == 18);
  for (std::size_t k = 1; k < s.size(); ++k) CHECK(s[k] - s[k - 1] == 2);
}
