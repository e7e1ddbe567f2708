#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "contramod/error.hpp"

namespace contramod {

/// One 2xN frame of in-phase/quadrature samples, stored I-row then Q-row.
class IQFrame {
 public:
  IQFrame() = default;
  explicit IQFrame(std::size_t length) : samples_(2 * length, 0.0f) {}
  /// `samples` holds the I row followed by the Q row; size must be even.
  explicit IQFrame(std::vector<float> samples);

  std::size_t length() const noexcept { return samples_.size() / 2; }

  float& i(std::size_t t) { return samples_[t]; }
  float& q(std::size_t t) { return samples_[length() + t]; }
  float i(std::size_t t) const { return samples_[t]; }
  float q(std::size_t t) const { return samples_[length() + t]; }

  std::span<const float> values() const noexcept { return samples_; }
  std::span<float> values() noexcept { return samples_; }

  bool all_finite() const noexcept;

  friend bool operator==(const IQFrame&, const IQFrame&) = default;

 private:
  std::vector<float> samples_;
};

/// Root-mean-square over all 2N values. Accumulates per-sample |x_t|^2 so the
/// result is exactly invariant under the quarter-turn rotations.
double frame_rms(const IQFrame& frame);

/// Scales the frame to unit RMS. Throws "zero-power frame" for all-zero input.
IQFrame normalize(const IQFrame& frame);

/// Labels are modulation scheme codes 0..10.
inline constexpr int kNumLabels = 11;

enum class SplitTag : std::uint8_t { None = 0, Train = 1, Val = 2, Test = 3 };

enum class Provenance { Synthetic, Converted, File };

/// (label, snr_db) key of a dataset cell.
using CellKey = std::pair<int, int>;

/// Labeled frames with per-frame metadata held in parallel arrays.
struct Dataset {
  std::size_t frame_len = 128;
  std::vector<IQFrame> frames;
  std::vector<int> labels;
  std::vector<int> snrs_db;
  std::vector<SplitTag> splits;
  Provenance provenance = Provenance::Synthetic;

  std::size_t size() const noexcept { return frames.size(); }
  bool empty() const noexcept { return frames.empty(); }

  void add(IQFrame frame, int label, int snr_db, SplitTag split = SplitTag::None);

  /// Checks parallel array lengths, frame shapes, label/snr ranges, finiteness.
  void validate() const;

  /// Frame indices grouped by (label, snr) cell, ascending in both keys.
  std::map<CellKey, std::vector<std::size_t>> cells() const;

  /// Indices carrying the given split tag, ascending.
  std::vector<std::size_t> indices_with(SplitTag tag) const;

  /// Copy of the selected frames (metadata carried along).
  Dataset subset(std::span<const std::size_t> indices) const;
};

/// Tags every cell 2:1:1 into train/val/test. Per cell of size n the counts
/// are floor(n/2), floor(n/4) and the remainder. Deterministic given seed.
Dataset split(const Dataset& dataset, std::uint64_t seed);

struct SubsetSelection {
  std::size_t n_labeled_per_cell = 10;
  /// Defaults to ceil(n/2) when unset.
  std::optional<std::size_t> n_val_labeled_per_cell;
  std::size_t u_unlabeled_per_cell = 0;
  std::uint64_t seed = 0;

  std::size_t val_count() const { return n_val_labeled_per_cell.value_or((n_labeled_per_cell + 1) / 2); }
};

struct Subsets {
  std::vector<std::size_t> labeled_train;
  std::vector<std::size_t> labeled_val;
  /// Extra train frames with labels withheld; disjoint from labeled_train.
  std::vector<std::size_t> unlabeled_train;

  /// Frames used for contrastive pretraining: labeled train frames plus the
  /// unlabeled extras, ascending.
  std::vector<std::size_t> pretrain_pool() const;
};

/// Draws per-cell prefixes of a seeded permutation, so a smaller n always
/// selects a subset of a larger n under the same seed. Requires split tags.
Subsets select_subsets(const Dataset& dataset, const SubsetSelection& selection);

// ---------------------------------------------------------------------------
// IQD v1 on-disk format (little-endian):
//   "IQD1" | u32 version=1 | u32 frame_count | u16 frame_len
//   frame_count x { u8 label | i8 snr_db | u8 split | f32[frame_len] I | f32[frame_len] Q }
//   u32 CRC-32 (zlib polynomial) of every preceding byte
// ---------------------------------------------------------------------------

inline constexpr std::size_t kIqdHeaderBytes = 14;
inline constexpr std::size_t kIqdRecordOverhead = 3;
inline constexpr std::size_t kIqdTrailerBytes = 4;

constexpr std::size_t iqd_file_size(std::size_t frames, std::size_t frame_len) {
  return kIqdHeaderBytes + frames * (kIqdRecordOverhead + 2 * frame_len * sizeof(float)) + kIqdTrailerBytes;
}

enum class IqdErrorCode { Io, BadMagic, BadVersion, Truncated, ChecksumMismatch, BadRecord };

class IqdError : public Error {
 public:
  IqdError(IqdErrorCode code, const std::string& what) : Error(ErrorKind::Data, what), code_(code) {}
  IqdErrorCode code() const noexcept { return code_; }

 private:
  IqdErrorCode code_;
};

std::vector<std::uint8_t> encode_iqd(const Dataset& dataset);
Dataset decode_iqd(std::span<const std::uint8_t> bytes);

void save_iqd(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_iqd(const std::filesystem::path& path);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// CRC-32 that `encode_iqd` stores in the trailer, i.e. over everything before it.
std::uint32_t iqd_checksum(const Dataset& dataset);

/// Index-list sidecar: one decimal index per line.
void write_index_list(std::span<const std::size_t> indices, const std::filesystem::path& path);
std::vector<std::size_t> read_index_list(const std::filesystem::path& path);

}  // namespace contramod
