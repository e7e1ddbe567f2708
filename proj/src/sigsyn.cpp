#include "contramod/sigsyn.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <numeric>

#include "contramod/parallel.hpp"

namespace contramod {

namespace {

constexpr std::array<std::string_view, kNumSchemes> kNames = {
    "BPSK", "QPSK", "8PSK", "PAM4", "QAM16", "QAM64", "GFSK", "CPFSK", "WBFM", "AM-DSB", "AM-SSB"};

constexpr double kPi = std::numbers::pi;

// Gray-coded amplitude levels for a PAM axis with 2^bits levels, indexed by
// the bit value. Adjacent levels differ in one bit.
std::vector<double> gray_pam_levels(std::size_t bits) {
  const std::size_t m = std::size_t{1} << bits;
  std::vector<double> levels(m);
  for (std::size_t pos = 0; pos < m; ++pos) {
    const std::size_t gray = pos ^ (pos >> 1);
    levels[gray] = -static_cast<double>(m - 1) + 2.0 * static_cast<double>(pos);
  }
  return levels;
}

std::vector<Complex> make_constellation(ModulationScheme s) {
  std::vector<Complex> pts;
  switch (s) {
    case ModulationScheme::BPSK:
      pts = {{1.0, 0.0}, {-1.0, 0.0}};
      break;
    case ModulationScheme::QPSK: {
      const double a = 1.0 / std::numbers::sqrt2;
      // bit0 -> I sign, bit1 -> Q sign
      for (int v = 0; v < 4; ++v) pts.emplace_back((v & 2) ? -a : a, (v & 1) ? -a : a);
      break;
    }
    case ModulationScheme::PSK8: {
      pts.resize(8);
      for (std::size_t pos = 0; pos < 8; ++pos) pts[pos ^ (pos >> 1)] = std::polar(1.0, 2.0 * kPi * pos / 8.0);
      break;
    }
    case ModulationScheme::PAM4: {
      const auto lv = gray_pam_levels(2);
      for (double l : lv) pts.emplace_back(l / std::sqrt(5.0), 0.0);
      break;
    }
    case ModulationScheme::QAM16:
    case ModulationScheme::QAM64: {
      const std::size_t axis_bits = s == ModulationScheme::QAM16 ? 2 : 3;
      const auto lv = gray_pam_levels(axis_bits);
      const double scale = s == ModulationScheme::QAM16 ? std::sqrt(10.0) : std::sqrt(42.0);
      const std::size_t m = lv.size();
      for (std::size_t v = 0; v < m * m; ++v) pts.emplace_back(lv[v / m] / scale, lv[v % m] / scale);
      break;
    }
    case ModulationScheme::GFSK:
    case ModulationScheme::CPFSK:
      pts = {{1.0, 0.0}, {-1.0, 0.0}};
      break;
    default:
      break;
  }
  return pts;
}

std::vector<std::uint8_t> random_bits(std::size_t n, CounterRng& rng) {
  std::vector<std::uint8_t> bits(n);
  for (auto& b : bits) b = static_cast<std::uint8_t>(rng.next() >> 63);
  return bits;
}

std::vector<Complex> rrc_taps(std::size_t sps, std::size_t span_symbols, double rolloff) {
  const std::size_t n = span_symbols * sps + 1;
  const double center = static_cast<double>(n - 1) / 2.0;
  std::vector<Complex> taps(n);
  double energy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = (static_cast<double>(k) - center) / static_cast<double>(sps);
    double h;
    if (std::abs(t) < 1e-12) {
      h = 1.0 - rolloff + 4.0 * rolloff / kPi;
    } else if (std::abs(std::abs(t) - 1.0 / (4.0 * rolloff)) < 1e-9) {
      h = rolloff / std::numbers::sqrt2 *
          ((1.0 + 2.0 / kPi) * std::sin(kPi / (4.0 * rolloff)) + (1.0 - 2.0 / kPi) * std::cos(kPi / (4.0 * rolloff)));
    } else {
      const double num = std::sin(kPi * t * (1.0 - rolloff)) + 4.0 * rolloff * t * std::cos(kPi * t * (1.0 + rolloff));
      const double den = kPi * t * (1.0 - (4.0 * rolloff * t) * (4.0 * rolloff * t));
      h = num / den;
    }
    taps[k] = h;
    energy += h * h;
  }
  for (auto& tap : taps) tap /= std::sqrt(energy);
  return taps;
}

// Shapes `symbols` and returns exactly frame_len samples. For RRC the first
// and last half-span of symbols only serve as filter transient.
std::vector<Complex> shape_pulses(std::span<const Complex> symbols, std::size_t frame_len, std::size_t sps,
                                  PulseShape shape, std::size_t lead_symbols) {
  std::vector<Complex> out(frame_len);
  if (shape == PulseShape::Rect) {
    for (std::size_t t = 0; t < frame_len; ++t) out[t] = symbols[lead_symbols + t / sps];
    return out;
  }
  const auto taps = rrc_taps(sps, 2 * lead_symbols, 0.35);
  const std::size_t delay = (taps.size() - 1) / 2;
  const std::size_t upsampled = symbols.size() * sps;
  for (std::size_t t = 0; t < frame_len; ++t) {
    const std::size_t n = lead_symbols * sps + t;  // output index in upsampled time
    Complex acc{};
    for (std::size_t k = 0; k < taps.size(); ++k) {
      const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(n + delay) - static_cast<std::ptrdiff_t>(k);
      if (m < 0 || static_cast<std::size_t>(m) >= upsampled || m % static_cast<std::ptrdiff_t>(sps) != 0) continue;
      acc += taps[k] * symbols[static_cast<std::size_t>(m) / sps];
    }
    out[t] = acc;
  }
  return out;
}

// Continuous-phase FSK with modulation index 0.5; GFSK smooths the NRZ
// frequency pulse with a Gaussian filter (BT = 0.35, span 3 symbols).
std::vector<Complex> fsk_waveform(std::span<const Complex> symbols, std::size_t frame_len, std::size_t sps,
                                  bool gaussian, std::size_t lead_symbols) {
  const std::size_t total = symbols.size() * sps;
  std::vector<double> freq(total);
  for (std::size_t n = 0; n < total; ++n) freq[n] = symbols[n / sps].real();
  if (gaussian) {
    constexpr double bt = 0.35;
    const std::size_t half = 3 * sps / 2;
    std::vector<double> g(2 * half + 1);
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double t = (static_cast<double>(k) - static_cast<double>(half)) / static_cast<double>(sps);
      g[k] = std::exp(-2.0 * kPi * kPi * bt * bt * t * t / std::numbers::ln2);
    }
    const double sum = std::accumulate(g.begin(), g.end(), 0.0);
    std::vector<double> smoothed(total, 0.0);
    for (std::size_t n = 0; n < total; ++n) {
      for (std::size_t k = 0; k < g.size(); ++k) {
        const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(n + half) - static_cast<std::ptrdiff_t>(k);
        const double v = m < 0 ? freq.front() : (static_cast<std::size_t>(m) >= total ? freq.back() : freq[m]);
        smoothed[n] += g[k] * v / sum;
      }
    }
    freq = std::move(smoothed);
  }
  constexpr double h = 0.5;
  std::vector<Complex> out(frame_len);
  double phase = 0.0;
  const std::size_t start = lead_symbols * sps;
  for (std::size_t n = 0; n < start + frame_len; ++n) {
    if (n >= start) out[n - start] = std::polar(1.0, phase);
    phase += kPi * h * freq[n] / static_cast<double>(sps);
  }
  return out;
}

// Fixed three-tone message; frequencies in cycles/sample are mutually
// incommensurate so no window repeats.
struct Tone {
  double amplitude;
  double frequency;
  double phase;
};
constexpr std::array<Tone, 3> kMessage = {Tone{0.5, 0.011, 0.0}, Tone{0.3, 0.011 * std::numbers::sqrt2, 1.0},
                                          Tone{0.2, 0.011 * 2.2360679774997896964, 2.0}};

double message(double n) {
  double m = 0.0;
  for (const auto& tone : kMessage) m += tone.amplitude * std::sin(2.0 * kPi * tone.frequency * n + tone.phase);
  return m;
}

double message_hilbert(double n) {
  double m = 0.0;
  for (const auto& tone : kMessage) m -= tone.amplitude * std::cos(2.0 * kPi * tone.frequency * n + tone.phase);
  return m;
}

std::vector<Complex> analog_waveform(ModulationScheme s, std::size_t frame_len, CounterRng& rng) {
  const double offset = std::floor(rng.uniform() * 1.0e5);
  std::vector<Complex> out(frame_len);
  switch (s) {
    case ModulationScheme::WBFM: {
      constexpr double deviation = 0.1;  // peak deviation, cycles/sample
      double phase = 0.0;
      for (std::size_t t = 0; t < frame_len; ++t) {
        out[t] = std::polar(1.0, phase);
        phase += 2.0 * kPi * deviation * message(offset + static_cast<double>(t));
      }
      break;
    }
    case ModulationScheme::AM_DSB:
      for (std::size_t t = 0; t < frame_len; ++t) out[t] = 1.0 + 0.8 * message(offset + static_cast<double>(t));
      break;
    case ModulationScheme::AM_SSB:
      for (std::size_t t = 0; t < frame_len; ++t) {
        const double n = offset + static_cast<double>(t);
        out[t] = Complex(message(n), message_hilbert(n));
      }
      break;
    default:
      throw data_error("unknown scheme");
  }
  return out;
}

void normalize_power(std::vector<Complex>& samples) {
  double p = 0.0;
  for (const auto& v : samples) p += std::norm(v);
  p /= static_cast<double>(samples.size());
  if (!(p > 0.0)) throw data_error("modulator produced a zero-power frame");
  const double scale = 1.0 / std::sqrt(p);
  for (auto& v : samples) v *= scale;
}

}  // namespace

ModulationScheme scheme_from_code(int value) {
  if (value < 0 || value >= kNumSchemes) throw data_error("unknown scheme");
  return static_cast<ModulationScheme>(value);
}

std::string_view scheme_name(ModulationScheme s) {
  const int c = code(s);
  if (c < 0 || c >= kNumSchemes) throw data_error("unknown scheme");
  return kNames[static_cast<std::size_t>(c)];
}

ModulationScheme parse_scheme(std::string_view name) {
  std::string key;
  for (char ch : name)
    if (std::isalnum(static_cast<unsigned char>(ch))) key.push_back(static_cast<char>(std::toupper(ch)));
  static const std::array<std::pair<std::string_view, ModulationScheme>, 18> kAliases = {{
      {"BPSK", ModulationScheme::BPSK},    {"QPSK", ModulationScheme::QPSK},     {"8PSK", ModulationScheme::PSK8},
      {"PSK8", ModulationScheme::PSK8},    {"PAM4", ModulationScheme::PAM4},     {"4PAM", ModulationScheme::PAM4},
      {"QAM16", ModulationScheme::QAM16},  {"16QAM", ModulationScheme::QAM16},   {"QAM64", ModulationScheme::QAM64},
      {"64QAM", ModulationScheme::QAM64},  {"GFSK", ModulationScheme::GFSK},     {"CPFSK", ModulationScheme::CPFSK},
      {"WBFM", ModulationScheme::WBFM},    {"AMDSB", ModulationScheme::AM_DSB},  {"AMSSB", ModulationScheme::AM_SSB},
      {"DSB", ModulationScheme::AM_DSB},   {"SSB", ModulationScheme::AM_SSB},    {"FM", ModulationScheme::WBFM},
  }};
  for (const auto& [alias, scheme] : kAliases)
    if (alias == key) return scheme;
  throw data_error("unknown scheme '" + std::string(name) + "'");
}

bool is_digital(ModulationScheme s) noexcept { return code(s) <= code(ModulationScheme::CPFSK); }

const std::vector<Complex>& constellation(ModulationScheme s) {
  static const auto tables = [] {
    std::array<std::vector<Complex>, kNumSchemes> t;
    for (auto scheme : kAllSchemes) t[static_cast<std::size_t>(code(scheme))] = make_constellation(scheme);
    return t;
  }();
  return tables[static_cast<std::size_t>(code(scheme_from_code(code(s))))];
}

std::size_t bits_per_symbol(ModulationScheme s) {
  const std::size_t m = constellation(s).size();
  if (m == 0) return 0;
  return static_cast<std::size_t>(std::countr_zero(m));
}

std::vector<Complex> map_bits(ModulationScheme s, std::span<const std::uint8_t> bits) {
  const auto& points = constellation(s);
  const std::size_t k = bits_per_symbol(s);
  if (k == 0) throw data_error("scheme " + std::string(scheme_name(s)) + " has no bit mapping");
  if (bits.size() % k != 0) throw data_error("bit count is not a multiple of bits per symbol");
  std::vector<Complex> symbols;
  symbols.reserve(bits.size() / k);
  for (std::size_t b = 0; b < bits.size(); b += k) {
    std::size_t v = 0;
    for (std::size_t j = 0; j < k; ++j) v = (v << 1) | (bits[b + j] & 1u);
    symbols.push_back(points[v]);
  }
  return symbols;
}

Modulated modulate(ModulationScheme scheme, std::size_t frame_len, std::size_t sps, CounterRng& rng,
                   PulseShape shape) {
  scheme_from_code(code(scheme));
  if (frame_len == 0 || sps == 0) throw usage_error("frame_len and samples-per-symbol must be positive");
  Modulated out;
  if (is_digital(scheme)) {
    const bool fsk = scheme == ModulationScheme::GFSK || scheme == ModulationScheme::CPFSK;
    const std::size_t payload = (frame_len + sps - 1) / sps;
    // Filter transients need surrounding symbols.
    const std::size_t lead = (shape == PulseShape::RootRaisedCosine && !fsk) ? 4 : (scheme == ModulationScheme::GFSK ? 2 : 0);
    const std::size_t nsym = payload + 2 * lead;
    out.symbols = map_bits(scheme, random_bits(nsym * bits_per_symbol(scheme), rng));
    out.samples = fsk ? fsk_waveform(out.symbols, frame_len, sps, scheme == ModulationScheme::GFSK, lead)
                      : shape_pulses(out.symbols, frame_len, sps, shape, lead);
  } else {
    out.samples = analog_waveform(scheme, frame_len, rng);
  }
  normalize_power(out.samples);
  const Complex carrier = std::polar(1.0, 2.0 * kPi * rng.uniform());
  for (auto& v : out.samples) v *= carrier;
  return out;
}

double noise_power(double signal_power, double snr_db) { return signal_power / std::pow(10.0, snr_db / 10.0); }

IQFrame apply_channel(std::span<const Complex> signal, const ChannelModel& channel) {
  if (signal.empty()) throw data_error("empty signal");
  if (!std::isfinite(channel.snr_db) || !std::isfinite(channel.gain)) throw data_error("non-finite channel parameters");
  double power = 0.0;
  for (const auto& v : signal) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) throw data_error("non-finite input signal");
    power += std::norm(channel.gain * v);
  }
  power /= static_cast<double>(signal.size());
  const double sigma = std::sqrt(noise_power(power, channel.snr_db) / 2.0);
  CounterRng rng(channel.rng_seed);
  IQFrame frame(signal.size());
  for (std::size_t t = 0; t < signal.size(); ++t) {
    const Complex r = channel.gain * signal[t];
    const double ni = sigma * rng.normal();
    const double nq = sigma * rng.normal();
    frame.i(t) = static_cast<float>(r.real() + ni);
    frame.q(t) = static_cast<float>(r.imag() + nq);
  }
  return frame;
}

std::vector<int> SynthSpec::default_snrs() {
  std::vector<int> snrs;
  for (int s = -20; s <= 18; s += 2) snrs.push_back(s);
  return snrs;
}

void SynthSpec::validate() const {
  if (schemes.empty()) throw usage_error("no schemes requested");
  if (snrs_db.empty()) throw usage_error("no SNRs requested");
  if (frames_per_cell < 1) throw usage_error("frames per cell must be at least 1");
  if (samples_per_symbol < 1 || frame_len < samples_per_symbol)
    throw usage_error("frame length must be at least samples-per-symbol");
  for (int s : snrs_db)
    if (s < -128 || s > 127) throw usage_error("SNR " + std::to_string(s) + " dB outside the storable range");
}

std::vector<IQFrame> generate_cell(const SynthSpec& spec, ModulationScheme scheme, int snr_db) {
  const std::uint64_t cell_key = derive_seed(spec.master_seed, "cell", {code(scheme), snr_db});
  std::vector<IQFrame> frames;
  frames.reserve(spec.frames_per_cell);
  for (std::size_t k = 0; k < spec.frames_per_cell; ++k) {
    const auto idx = static_cast<std::int64_t>(k);
    CounterRng source(derive_seed(cell_key, "source", {idx}));
    const auto signal = modulate(scheme, spec.frame_len, spec.samples_per_symbol, source, spec.pulse);
    const ChannelModel channel{spec.gain, static_cast<double>(snr_db), derive_seed(cell_key, "noise", {idx})};
    frames.push_back(apply_channel(signal.samples, channel));
  }
  return frames;
}

Dataset generate_dataset(const SynthSpec& spec) {
  spec.validate();
  const std::size_t n_cells = spec.schemes.size() * spec.snrs_db.size();
  std::vector<std::vector<IQFrame>> cells(n_cells);
  parallel_for(n_cells, spec.jobs, [&](std::size_t c) {
    cells[c] = generate_cell(spec, spec.schemes[c / spec.snrs_db.size()], spec.snrs_db[c % spec.snrs_db.size()]);
  });
  Dataset out;
  out.frame_len = spec.frame_len;
  out.provenance = Provenance::Synthetic;
  out.frames.reserve(n_cells * spec.frames_per_cell);
  for (std::size_t c = 0; c < n_cells; ++c) {
    const int label = code(spec.schemes[c / spec.snrs_db.size()]);
    const int snr = spec.snrs_db[c % spec.snrs_db.size()];
    for (auto& f : cells[c]) out.add(std::move(f), label, snr);
  }
  return out;
}

}  // namespace contramod
