#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "contramod/dataio.hpp"
#include "contramod/rng.hpp"

namespace contramod {

/// The 11 schemes; the enumerator value is the class label.
enum class ModulationScheme : std::uint8_t {
  BPSK = 0,
  QPSK = 1,
  PSK8 = 2,
  PAM4 = 3,
  QAM16 = 4,
  QAM64 = 5,
  GFSK = 6,
  CPFSK = 7,
  WBFM = 8,
  AM_DSB = 9,
  AM_SSB = 10,
};

inline constexpr int kNumSchemes = 11;

inline constexpr std::array<ModulationScheme, kNumSchemes> kAllSchemes = {
    ModulationScheme::BPSK,  ModulationScheme::QPSK,  ModulationScheme::PSK8, ModulationScheme::PAM4,
    ModulationScheme::QAM16, ModulationScheme::QAM64, ModulationScheme::GFSK, ModulationScheme::CPFSK,
    ModulationScheme::WBFM,  ModulationScheme::AM_DSB, ModulationScheme::AM_SSB};

constexpr int code(ModulationScheme s) noexcept { return static_cast<int>(s); }

/// Throws "unknown scheme" outside 0..10.
ModulationScheme scheme_from_code(int code);
std::string_view scheme_name(ModulationScheme s);
/// Accepts canonical names and common archive spellings ("8PSK", "PSK8",
/// "QAM16", "16-QAM", "4-PAM", "AM_DSB", ...), case-insensitively.
ModulationScheme parse_scheme(std::string_view name);

bool is_digital(ModulationScheme s) noexcept;

using Complex = std::complex<double>;

/// Unit-average-power Gray-mapped alphabet. FSK schemes report their
/// frequency levels {-1, +1}; analog schemes have no alphabet.
const std::vector<Complex>& constellation(ModulationScheme s);
std::size_t bits_per_symbol(ModulationScheme s);

/// Maps a bit stream onto symbols (length must divide by bits_per_symbol).
/// BPSK: 0 -> +1, 1 -> -1.
std::vector<Complex> map_bits(ModulationScheme s, std::span<const std::uint8_t> bits);

enum class PulseShape { Rect, RootRaisedCosine };

struct Modulated {
  std::vector<Complex> samples;  // frame_len samples, unit average power
  std::vector<Complex> symbols;  // pre-shaping alphabet symbols (digital only)
};

/// Draws random bits (digital) or a random window of the fixed three-tone
/// message (analog), shapes, normalizes the frame to unit power and applies
/// a random carrier phase.
Modulated modulate(ModulationScheme scheme, std::size_t frame_len, std::size_t sps, CounterRng& rng,
                   PulseShape shape = PulseShape::Rect);

/// r = c * s + n.
struct ChannelModel {
  double gain = 1.0;
  double snr_db = 0.0;
  std::uint64_t rng_seed = 0;
};

/// Complex noise variance for the given clean power and SNR.
double noise_power(double signal_power, double snr_db);

/// gain*signal plus circular white Gaussian noise whose total complex
/// variance is P_clean / 10^(snr/10), split evenly over I and Q.
IQFrame apply_channel(std::span<const Complex> signal, const ChannelModel& channel);

struct SynthSpec {
  std::vector<ModulationScheme> schemes{kAllSchemes.begin(), kAllSchemes.end()};
  std::vector<int> snrs_db = default_snrs();
  std::size_t frames_per_cell = 1000;
  std::size_t frame_len = 128;
  std::size_t samples_per_symbol = 8;
  std::uint64_t master_seed = 0;
  double gain = 1.0;
  PulseShape pulse = PulseShape::Rect;
  unsigned jobs = 1;

  /// -20, -18, ..., +18 dB.
  static std::vector<int> default_snrs();
  void validate() const;
};

/// Frames of one (scheme, snr) cell; depends only on (master_seed, scheme,
/// snr, frame index), never on the other cells of the spec.
std::vector<IQFrame> generate_cell(const SynthSpec& spec, ModulationScheme scheme, int snr_db);

/// Cells in spec order (schemes outer, SNRs inner), frames ascending.
Dataset generate_dataset(const SynthSpec& spec);

}  // namespace contramod
