#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "cxr/autodiff/tensor.hpp"

namespace cxr::ad {

// Named-tensor container with a fixed little-endian layout:
//
//   "CPXCKPT1"  u32 entry_count
//   per entry:  u32 name_len, name bytes (UTF-8), u8 dtype, u8 ndim,
//               u64 dims[ndim], raw little-endian values
//
// dtype 0 = f32, 1 = f64. Entries keep insertion order. The reserved entry
// "__meta__" uses dtype 2 (raw bytes, 1-D) and holds a u32 length followed by
// UTF-8 "key=value\n" lines.
class Checkpoint {
 public:
  static constexpr std::string_view kMagic = "CPXCKPT1";
  static constexpr std::string_view kMetaName = "__meta__";

  enum class DType : std::uint8_t { f32 = 0, f64 = 1, bytes = 2 };

  struct Entry {
    std::string name;
    DType dtype;
    Shape shape;
    std::vector<std::uint8_t> payload;  // little-endian raw values
  };

  template <typename T>
  void put(const std::string& name, const Tensor<T>& t) {
    put_values<T>(name, t.shape(), t.data());
  }

  template <typename T>
  void put_values(const std::string& name, const Shape& shape, std::span<const T> values) {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    if (name == kMetaName) throw ContractError("'__meta__' is reserved");
    if (numel_of(shape) != values.size()) throw DimensionError("checkpoint: shape/data mismatch for " + name);
    Entry e{name, std::is_same_v<T, float> ? DType::f32 : DType::f64, shape, {}};
    e.payload.reserve(values.size() * sizeof(T));
    for (T v : values) {
      if constexpr (std::is_same_v<T, float>) {
        append_le(e.payload, std::bit_cast<std::uint32_t>(v), 4);
      } else {
        append_le(e.payload, std::bit_cast<std::uint64_t>(v), 8);
      }
    }
    upsert(std::move(e));
  }

  void put_scalar(const std::string& name, double v) {
    put_values<double>(name, Shape{}, std::span<const double>(&v, 1));
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  const Entry& entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw IoError("checkpoint has no entry '" + name + "'");
    return entries_[it->second];
  }

  // Values of an entry converted to T.
  template <typename T>
  std::vector<T> values(const std::string& name) const {
    const Entry& e = entry(name);
    std::vector<T> out(numel_of(e.shape));
    if (e.dtype == DType::f32) {
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = T(std::bit_cast<float>(static_cast<std::uint32_t>(read_le(e.payload, i * 4, 4))));
    } else if (e.dtype == DType::f64) {
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = T(std::bit_cast<double>(read_le(e.payload, i * 8, 8)));
    } else {
      throw ContractError("entry '" + name + "' is not numeric");
    }
    return out;
  }

  template <typename T>
  Tensor<T> tensor(const std::string& name) const {
    return Tensor<T>(entry(name).shape, values<T>(name));
  }

  double scalar(const std::string& name) const { return values<double>(name).at(0); }

  // Copies an entry into an existing tensor of identical shape.
  template <typename T>
  void load_into(const std::string& name, Tensor<T>& dst) const {
    const Entry& e = entry(name);
    if (e.shape != dst.shape())
      throw DimensionError("checkpoint entry '" + name + "' has shape " + shape_str(e.shape) +
                           ", expected " + shape_str(dst.shape()));
    auto v = values<T>(name);
    std::copy(v.begin(), v.end(), dst.data().begin());
  }

  void set_meta(const std::map<std::string, std::string>& kv) {
    std::string text;
    for (const auto& [k, v] : kv) {
      if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
        throw ContractError("checkpoint metadata key/value may not contain '=' or newlines");
      text += k + "=" + v + "\n";
    }
    Entry e{std::string(kMetaName), DType::bytes, {}, {}};
    append_le(e.payload, text.size(), 4);
    e.payload.insert(e.payload.end(), text.begin(), text.end());
    e.shape = {e.payload.size()};
    upsert(std::move(e));
  }

  std::map<std::string, std::string> meta() const {
    std::map<std::string, std::string> kv;
    if (!contains(std::string(kMetaName))) return kv;
    const auto& p = entry(std::string(kMetaName)).payload;
    if (p.size() < 4) throw IoError("checkpoint: truncated metadata block");
    const std::size_t len = read_le(p, 0, 4);
    if (p.size() != 4 + len) throw IoError("checkpoint: metadata length mismatch");
    std::istringstream is(std::string(p.begin() + 4, p.end()));
    std::string line;
    while (std::getline(is, line)) {
      auto eq = line.find('=');
      if (eq == std::string::npos) throw IoError("checkpoint: malformed metadata line '" + line + "'");
      kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
  }

  const std::vector<Entry>& entries() const { return entries_; }

  std::vector<std::uint8_t> serialize() const {
    std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
    append_le(out, entries_.size(), 4);
    for (const auto& e : entries_) {
      append_le(out, e.name.size(), 4);
      out.insert(out.end(), e.name.begin(), e.name.end());
      out.push_back(static_cast<std::uint8_t>(e.dtype));
      out.push_back(static_cast<std::uint8_t>(e.shape.size()));
      for (auto d : e.shape) append_le(out, d, 8);
      out.insert(out.end(), e.payload.begin(), e.payload.end());
    }
    return out;
  }

  static Checkpoint deserialize(const std::vector<std::uint8_t>& in) {
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
      if (pos + n > in.size()) throw IoError("checkpoint: truncated file");
    };
    need(kMagic.size());
    if (!std::equal(kMagic.begin(), kMagic.end(), in.begin())) throw IoError("checkpoint: bad magic");
    pos += kMagic.size();
    need(4);
    const std::size_t count = read_le(in, pos, 4);
    pos += 4;
    Checkpoint ck;
    for (std::size_t k = 0; k < count; ++k) {
      Entry e;
      need(4);
      const std::size_t nlen = read_le(in, pos, 4);
      pos += 4;
      need(nlen + 2);
      e.name.assign(in.begin() + pos, in.begin() + pos + nlen);
      pos += nlen;
      const std::uint8_t code = in[pos++];
      if (code > 2) throw IoError("checkpoint: unknown dtype code " + std::to_string(code));
      e.dtype = static_cast<DType>(code);
      const std::size_t ndim = in[pos++];
      need(ndim * 8);
      for (std::size_t d = 0; d < ndim; ++d, pos += 8) e.shape.push_back(read_le(in, pos, 8));
      const std::size_t width = e.dtype == DType::f32 ? 4 : e.dtype == DType::f64 ? 8 : 1;
      const std::size_t bytes = numel_of(e.shape) * width;
      need(bytes);
      e.payload.assign(in.begin() + pos, in.begin() + pos + bytes);
      pos += bytes;
      ck.upsert(std::move(e));
    }
    if (pos != in.size()) throw IoError("checkpoint: trailing bytes");
    return ck;
  }

  void write(const std::string& path) const {
    auto bytes = serialize();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("failed writing '" + path + "'");
  }

  static Checkpoint read(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
  }

 private:
  static void append_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  static std::uint64_t read_le(const std::vector<std::uint8_t>& in, std::size_t pos, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::uint64_t(in[pos + i]) << (8 * i);
    return v;
  }

  void upsert(Entry e) {
    if (auto it = index_.find(e.name); it != index_.end()) {
      entries_[it->second] = std::move(e);
      return;
    }
    index_[e.name] = entries_.size();
    entries_.push_back(std::move(e));
  }

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace cxr::ad
