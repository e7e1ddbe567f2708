#include "contramod/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "contramod/dataio.hpp"

namespace contramod::nn {

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + off_, sizeof(T));
    off_ += sizeof(T);
    return value;
  }

  void read(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + off_, n);
    off_ += n;
  }

 private:
  void need(std::size_t n) const {
    if (off_ + n > bytes_.size()) throw data_error("checkpoint truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t off_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ParameterTree<float>& params, std::string_view prefix) {
  const auto ids = params.with_prefix(prefix);
  std::vector<std::uint8_t> out{'C', 'M', 'C', 'K'};
  put<std::uint32_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ids.size()));
  for (ParamId id : ids) {
    const auto& p = params[id];
    put<std::uint16_t>(out, static_cast<std::uint16_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(p.shape.size()));
    for (std::size_t d : p.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    const auto* data = reinterpret_cast<const std::uint8_t*>(p.value.data());
    out.insert(out.end(), data, data + p.value.size() * sizeof(float));
  }
  put<std::uint32_t>(out, crc32(out));
  return out;
}

ParameterTree<float> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "CMCK", 4) != 0) throw data_error("bad magic: not a checkpoint");
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  if (stored != crc32(bytes.first(bytes.size() - 4))) throw data_error("checkpoint checksum mismatch");
  Reader r(bytes.first(bytes.size() - 4));
  r.get<std::uint32_t>();  // magic
  const auto version = r.get<std::uint32_t>();
  if (version != 1) throw data_error("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  ParameterTree<float> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name(r.get<std::uint16_t>(), '\0');
    r.read(name.data(), name.size());
    std::vector<std::size_t> shape(r.get<std::uint8_t>());
    std::size_t total = 1;
    for (auto& d : shape) {
      d = r.get<std::uint32_t>();
      total *= d;
    }
    const std::size_t cols = shape.empty() ? 1 : shape.back();
    if (cols == 0) throw data_error("checkpoint parameter '" + name + "' has an empty dimension");
    Mat<float> value(static_cast<Eigen::Index>(total / cols), static_cast<Eigen::Index>(cols));
    r.read(value.data(), total * sizeof(float));
    out.add(std::move(name), std::move(shape), std::move(value));
  }
  return out;
}

void save_checkpoint(const ParameterTree<float>& params, const std::filesystem::path& path, std::string_view prefix) {
  const auto bytes = encode_checkpoint(params, prefix);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw data_error("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw data_error("write failed: " + path.string());
}

ParameterTree<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const Error& e) {
    throw data_error(path.string() + ": " + e.what());
  }
}

}  // namespace contramod::nn
