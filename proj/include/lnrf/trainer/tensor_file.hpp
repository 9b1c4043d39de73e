#pragma once

// Versioned binary tensor table:
//   "LNRF-CKPT" | u16 version | u32 tensor count |
//   per tensor: u32 name length | UTF-8 name | u32 rank | rank x u64 dims | f32 payload
// Everything little-endian.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "lnrf/common.hpp"

namespace lnrf {

inline constexpr char kCheckpointMagic[] = "LNRF-CKPT";
inline constexpr std::size_t kCheckpointMagicSize = 9;
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct TensorRecord {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<float> data;

  std::uint64_t numel() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

class TensorTable {
 public:
  void add(std::string name, std::vector<std::uint64_t> dims, std::span<const double> values) {
    TensorRecord r{std::move(name), std::move(dims), {}};
    if (r.numel() != values.size()) throw ShapeError("tensor '" + r.name + "': dims do not match value count");
    r.data.reserve(values.size());
    for (double v : values) r.data.push_back(static_cast<float>(v));
    records_.push_back(std::move(r));
  }
  void add(TensorRecord r) { records_.push_back(std::move(r)); }

  const TensorRecord* find(const std::string& name) const {
    for (const auto& r : records_)
      if (r.name == name) return &r;
    return nullptr;
  }
  const TensorRecord& get(const std::string& name) const {
    if (const auto* r = find(name)) return *r;
    throw ParseError("checkpoint is missing tensor '" + name + "'");
  }
  // Copies a tensor into `out`, checking the element count.
  void read_into(const std::string& name, std::span<double> out) const {
    const auto& r = get(name);
    if (r.data.size() != out.size())
      throw ShapeError("tensor '" + name + "' has " + std::to_string(r.data.size()) + " values, expected " +
                       std::to_string(out.size()));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = r.data[i];
  }

  const std::vector<TensorRecord>& records() const { return records_; }

 private:
  std::vector<TensorRecord> records_;
};

namespace detail {

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t& pos, int bytes) {
  if (in.size() - pos < std::size_t(bytes)) throw ParseError("tensor file truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t(in[pos + i]) << (8 * i);
  pos += bytes;
  return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize(const TensorTable& table) {
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + kCheckpointMagicSize);
  detail::put_le(out, kCheckpointVersion, 2);
  detail::put_le(out, table.records().size(), 4);
  for (const auto& r : table.records()) {
    detail::put_le(out, r.name.size(), 4);
    out.insert(out.end(), r.name.begin(), r.name.end());
    detail::put_le(out, r.dims.size(), 4);
    for (auto d : r.dims) detail::put_le(out, d, 8);
    for (float f : r.data) {
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      detail::put_le(out, u, 4);
    }
  }
  return out;
}

inline TensorTable deserialize(std::span<const std::uint8_t> in) {
  if (in.size() < kCheckpointMagicSize || std::memcmp(in.data(), kCheckpointMagic, kCheckpointMagicSize) != 0)
    throw ParseError("not a tensor file (bad magic)");
  std::size_t pos = kCheckpointMagicSize;
  const auto version = detail::get_le(in, pos, 2);
  if (version != kCheckpointVersion) throw ParseError("unsupported tensor file version " + std::to_string(version));
  const auto count = detail::get_le(in, pos, 4);
  TensorTable table;
  for (std::uint64_t i = 0; i < count; ++i) {
    TensorRecord r;
    const auto len = detail::get_le(in, pos, 4);
    if (in.size() - pos < len) throw ParseError("tensor file truncated");
    r.name.assign(reinterpret_cast<const char*>(in.data() + pos), len);
    pos += len;
    const auto rank = detail::get_le(in, pos, 4);
    for (std::uint64_t k = 0; k < rank; ++k) r.dims.push_back(detail::get_le(in, pos, 8));
    const auto n = r.numel();
    if ((in.size() - pos) / 4 < n) throw ParseError("tensor '" + r.name + "' payload truncated");
    r.data.resize(n);
    for (auto& f : r.data) {
      const auto u = static_cast<std::uint32_t>(detail::get_le(in, pos, 4));
      std::memcpy(&f, &u, 4);
    }
    table.add(std::move(r));
  }
  if (pos != in.size()) throw ParseError("trailing bytes after tensor table");
  return table;
}

// Write-to-temporary then rename, so readers never see a partial file.
inline void write_tensor_file(const std::filesystem::path& path, const TensorTable& table) {
  const auto bytes = serialize(table);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline TensorTable read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// Integers are stored as f32 tensors of 16-bit words (exactly representable).
inline std::vector<double> encode_u64(std::uint64_t v) {
  return {double(v & 0xffff), double((v >> 16) & 0xffff), double((v >> 32) & 0xffff), double(v >> 48)};
}

inline std::uint64_t decode_u64(const TensorRecord& r) {
  if (r.data.size() != 4) throw ParseError("integer tensor '" + r.name + "' must hold 4 words");
  std::uint64_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint64_t(r.data[i]) << (16 * i);
  return v;
}

}  // namespace lnrf
