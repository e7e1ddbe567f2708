#include "contramod/dataio.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "contramod/rng.hpp"

namespace contramod {

static_assert(std::endian::native == std::endian::little, "IQD I/O assumes a little-endian host");

IQFrame::IQFrame(std::vector<float> samples) : samples_(std::move(samples)) {
  if (samples_.size() % 2 != 0) throw data_error("IQ frame needs an even number of values (I row then Q row)");
}

bool IQFrame::all_finite() const noexcept {
  return std::all_of(samples_.begin(), samples_.end(), [](float v) { return std::isfinite(v); });
}

double frame_rms(const IQFrame& frame) {
  const std::size_t n = frame.length();
  if (n == 0) return 0.0;
  double power = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double i = frame.i(t);
    const double q = frame.q(t);
    power += i * i + q * q;
  }
  return std::sqrt(power / static_cast<double>(2 * n));
}

IQFrame normalize(const IQFrame& frame) {
  const double rms = frame_rms(frame);
  if (!(rms > 0.0)) throw data_error("zero-power frame");
  if (!std::isfinite(rms)) throw data_error("non-finite frame");
  IQFrame out = frame;
  for (float& v : out.values()) v = static_cast<float>(static_cast<double>(v) / rms);
  return out;
}

void Dataset::add(IQFrame frame, int label, int snr_db, SplitTag split) {
  if (frames.empty() && frame_len == 0) frame_len = frame.length();
  if (frame.length() != frame_len)
    throw data_error("frame of length " + std::to_string(frame.length()) + " added to a dataset of length " +
                     std::to_string(frame_len));
  frames.push_back(std::move(frame));
  labels.push_back(label);
  snrs_db.push_back(snr_db);
  splits.push_back(split);
}

void Dataset::validate() const {
  const std::size_t n = frames.size();
  if (labels.size() != n || snrs_db.size() != n || splits.size() != n)
    throw data_error("dataset arrays have mismatched lengths");
  for (std::size_t k = 0; k < n; ++k) {
    if (frames[k].length() != frame_len)
      throw data_error("frame " + std::to_string(k) + " has length " + std::to_string(frames[k].length()) +
                       ", expected " + std::to_string(frame_len));
    if (labels[k] < 0 || labels[k] >= kNumLabels) throw data_error("frame " + std::to_string(k) + " has label out of range");
    if (snrs_db[k] < -128 || snrs_db[k] > 127) throw data_error("frame " + std::to_string(k) + " has snr out of range");
    if (!frames[k].all_finite()) throw data_error("frame " + std::to_string(k) + " has non-finite samples");
  }
}

std::map<CellKey, std::vector<std::size_t>> Dataset::cells() const {
  std::map<CellKey, std::vector<std::size_t>> out;
  for (std::size_t k = 0; k < frames.size(); ++k) out[{labels[k], snrs_db[k]}].push_back(k);
  return out;
}

std::vector<std::size_t> Dataset::indices_with(SplitTag tag) const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < splits.size(); ++k)
    if (splits[k] == tag) out.push_back(k);
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.frame_len = frame_len;
  out.provenance = provenance;
  for (std::size_t k : indices) {
    if (k >= size()) throw data_error("subset index " + std::to_string(k) + " out of range");
    out.add(frames[k], labels[k], snrs_db[k], splits[k]);
  }
  return out;
}

namespace {

std::string cell_name(const CellKey& key) {
  return "(label " + std::to_string(key.first) + ", snr " + std::to_string(key.second) + " dB)";
}

std::vector<std::size_t> permuted(std::vector<std::size_t> indices, CounterRng rng) {
  shuffle(std::span<std::size_t>(indices), rng);
  return indices;
}

}  // namespace

Dataset split(const Dataset& dataset, std::uint64_t seed) {
  if (dataset.empty()) throw data_error("cannot split an empty dataset");
  Dataset out = dataset;
  for (const auto& [key, members] : dataset.cells()) {
    const auto order = permuted(members, CounterRng(derive_seed(seed, "split", {key.first, key.second})));
    const std::size_t n_train = order.size() / 2;
    const std::size_t n_val = order.size() / 4;
    for (std::size_t r = 0; r < order.size(); ++r) {
      out.splits[order[r]] = r < n_train ? SplitTag::Train : (r < n_train + n_val ? SplitTag::Val : SplitTag::Test);
    }
  }
  return out;
}

std::vector<std::size_t> Subsets::pretrain_pool() const {
  std::vector<std::size_t> pool = labeled_train;
  pool.insert(pool.end(), unlabeled_train.begin(), unlabeled_train.end());
  std::sort(pool.begin(), pool.end());
  return pool;
}

Subsets select_subsets(const Dataset& dataset, const SubsetSelection& selection) {
  std::map<CellKey, std::vector<std::size_t>> train_cells;
  std::map<CellKey, std::vector<std::size_t>> val_cells;
  for (std::size_t k = 0; k < dataset.size(); ++k) {
    const CellKey key{dataset.labels[k], dataset.snrs_db[k]};
    if (dataset.splits[k] == SplitTag::Train) train_cells[key].push_back(k);
    if (dataset.splits[k] == SplitTag::Val) val_cells[key].push_back(k);
  }
  if (train_cells.empty()) throw data_error("dataset has no train split; run split first");

  const std::size_t n = selection.n_labeled_per_cell;
  const std::size_t n_val = selection.val_count();
  const std::size_t u = selection.u_unlabeled_per_cell;
  Subsets out;
  for (const auto& [key, members] : train_cells) {
    if (n + u > members.size())
      throw data_error("cell " + cell_name(key) + " has " + std::to_string(members.size()) +
                       " train frames; requested " + std::to_string(n) + " labeled + " + std::to_string(u) +
                       " unlabeled");
    const auto order =
        permuted(members, CounterRng(derive_seed(selection.seed, "select-train", {key.first, key.second})));
    out.labeled_train.insert(out.labeled_train.end(), order.begin(), order.begin() + n);
    out.unlabeled_train.insert(out.unlabeled_train.end(), order.begin() + n, order.begin() + n + u);

    const auto vit = val_cells.find(key);
    const std::size_t available = vit == val_cells.end() ? 0 : vit->second.size();
    if (n_val > available)
      throw data_error("cell " + cell_name(key) + " has " + std::to_string(available) + " val frames; requested " +
                       std::to_string(n_val) + " labeled");
    if (n_val > 0) {
      const auto vorder =
          permuted(vit->second, CounterRng(derive_seed(selection.seed, "select-val", {key.first, key.second})));
      out.labeled_val.insert(out.labeled_val.end(), vorder.begin(), vorder.begin() + n_val);
    }
  }
  std::sort(out.labeled_train.begin(), out.labeled_train.end());
  std::sort(out.labeled_val.begin(), out.labeled_val.end());
  std::sort(out.unlabeled_train.begin(), out.unlabeled_train.end());
  return out;
}

// --- IQD v1 -----------------------------------------------------------------

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const std::size_t len = std::min(kChunk, bytes.size() - off);
    crc = ::crc32(crc, bytes.data() + off, static_cast<uInt>(len));
  }
  return static_cast<std::uint32_t>(crc);
}

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(std::span<const std::uint8_t> bytes, std::size_t& offset) {
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  offset += sizeof(T);
  return value;
}

}  // namespace

std::vector<std::uint8_t> encode_iqd(const Dataset& dataset) {
  dataset.validate();
  if (dataset.frame_len > 0xffff) throw data_error("frame length exceeds IQD v1 limit");
  std::vector<std::uint8_t> out;
  out.reserve(iqd_file_size(dataset.size(), dataset.frame_len));
  out.insert(out.end(), {'I', 'Q', 'D', '1'});
  put<std::uint32_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dataset.size()));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(dataset.frame_len));
  for (std::size_t k = 0; k < dataset.size(); ++k) {
    put<std::uint8_t>(out, static_cast<std::uint8_t>(dataset.labels[k]));
    put<std::int8_t>(out, static_cast<std::int8_t>(dataset.snrs_db[k]));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(dataset.splits[k]));
    const auto values = dataset.frames[k].values();
    const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
    out.insert(out.end(), p, p + values.size_bytes());
  }
  put<std::uint32_t>(out, crc32(out));
  return out;
}

std::uint32_t iqd_checksum(const Dataset& dataset) {
  const auto bytes = encode_iqd(dataset);
  return crc32(std::span(bytes).first(bytes.size() - kIqdTrailerBytes));
}

Dataset decode_iqd(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "IQD1", 4) != 0)
    throw IqdError(IqdErrorCode::BadMagic, "bad magic: not an IQD v1 file");
  if (bytes.size() < kIqdHeaderBytes + kIqdTrailerBytes)
    throw IqdError(IqdErrorCode::Truncated, "truncated file: header incomplete");
  std::size_t off = 4;
  const auto version = get<std::uint32_t>(bytes, off);
  if (version != 1) throw IqdError(IqdErrorCode::BadVersion, "unsupported IQD version " + std::to_string(version));
  const auto count = get<std::uint32_t>(bytes, off);
  const auto frame_len = get<std::uint16_t>(bytes, off);
  const std::size_t expected = iqd_file_size(count, frame_len);
  if (bytes.size() < expected)
    throw IqdError(IqdErrorCode::Truncated, "truncated file: expected " + std::to_string(expected) + " bytes, got " +
                                                std::to_string(bytes.size()));
  if (bytes.size() > expected)
    throw IqdError(IqdErrorCode::BadRecord, "trailing bytes after IQD payload");
  std::size_t crc_off = expected - kIqdTrailerBytes;
  const auto stored = get<std::uint32_t>(bytes, crc_off);
  if (stored != crc32(bytes.first(expected - kIqdTrailerBytes)))
    throw IqdError(IqdErrorCode::ChecksumMismatch, "checksum mismatch");

  Dataset out;
  out.frame_len = frame_len;
  out.provenance = Provenance::File;
  out.frames.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto label = get<std::uint8_t>(bytes, off);
    const auto snr = get<std::int8_t>(bytes, off);
    const auto tag = get<std::uint8_t>(bytes, off);
    if (tag > 3) throw IqdError(IqdErrorCode::BadRecord, "record " + std::to_string(k) + " has invalid split tag");
    if (label >= kNumLabels)
      throw IqdError(IqdErrorCode::BadRecord, "record " + std::to_string(k) + " has label " + std::to_string(label));
    std::vector<float> values(2 * static_cast<std::size_t>(frame_len));
    std::memcpy(values.data(), bytes.data() + off, values.size() * sizeof(float));
    off += values.size() * sizeof(float);
    out.add(IQFrame(std::move(values)), label, snr, static_cast<SplitTag>(tag));
  }
  return out;
}

void save_iqd(const Dataset& dataset, const std::filesystem::path& path) {
  const auto bytes = encode_iqd(dataset);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IqdError(IqdErrorCode::Io, "cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IqdError(IqdErrorCode::Io, "write failed: " + path.string());
}

Dataset load_iqd(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IqdError(IqdErrorCode::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  try {
    return decode_iqd(bytes);
  } catch (const IqdError& e) {
    throw IqdError(e.code(), path.string() + ": " + e.what());
  }
}

void write_index_list(std::span<const std::size_t> indices, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw data_error("cannot open " + path.string() + " for writing");
  for (std::size_t k : indices) os << k << '\n';
  if (!os) throw data_error("write failed: " + path.string());
}

std::vector<std::size_t> read_index_list(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw data_error("cannot open " + path.string());
  std::vector<std::size_t> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(line, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != line.size()) throw data_error(path.string() + ": bad index line '" + line + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

}  // namespace contramod
