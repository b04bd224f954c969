// "CXT1" tensor-container file format, used for datasets, checkpoints and
// prediction dumps.
//
// Layout, all little-endian:
//   4-byte magic "CXT1"
//   u32 entry count
//   per entry:
//     u16 name length, name bytes (UTF-8)
//     u8 kind (0 = real, 1 = complex)
//     u8 rank, rank x u32 dims
//     payload: f64 real plane, then f64 imag plane if complex
#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "fc2mfn/ctensor.hpp"

namespace fc2mfn {

enum class ContainerErrc {
  io,
  bad_magic,
  unsupported_version,
  truncated,
  bad_entry,
};

struct ContainerError : std::runtime_error {
  ContainerErrc code;
  ContainerError(ContainerErrc c, const std::string& msg)
      : std::runtime_error(msg), code(c) {}
};

using ContainerValue = std::variant<RTensor, CTensor>;

// Insertion-ordered name -> tensor map.
struct TensorContainer {
  std::uint32_t version = 1;
  std::vector<std::pair<std::string, ContainerValue>> entries;

  void put(std::string name, ContainerValue v) {
    for (auto& e : entries) {
      if (e.first == name) {
        e.second = std::move(v);
        return;
      }
    }
    entries.emplace_back(std::move(name), std::move(v));
  }

  const ContainerValue* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.first == name) return &e.second;
    return nullptr;
  }

  const RTensor& real_at(const std::string& name) const {
    const ContainerValue* v = find(name);
    if (!v || !std::holds_alternative<RTensor>(*v))
      throw ContainerError(ContainerErrc::bad_entry, "missing real entry: " + name);
    return std::get<RTensor>(*v);
  }

  const CTensor& complex_at(const std::string& name) const {
    const ContainerValue* v = find(name);
    if (!v || !std::holds_alternative<CTensor>(*v))
      throw ContainerError(ContainerErrc::bad_entry, "missing complex entry: " + name);
    return std::get<CTensor>(*v);
  }
};

namespace detail {

inline void put_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& buf, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  ByteReader(const unsigned char* p, std::size_t n) : p_(p), n_(n) {}

  void need(std::size_t k) const {
    if (pos_ + k > n_)
      throw ContainerError(ContainerErrc::truncated, "container truncated");
  }
  std::uint8_t u8() {
    need(1);
    return p_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(p_[pos_] | (p_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p_[pos_ + i]) << (8 * i);
    pos_ += 8;
    double d;
    std::memcpy(&d, &bits, sizeof d);
    return d;
  }
  std::string bytes(std::size_t k) {
    need(k);
    std::string s(reinterpret_cast<const char*>(p_ + pos_), k);
    pos_ += k;
    return s;
  }
  bool exhausted() const { return pos_ == n_; }

 private:
  const unsigned char* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

inline void serialize_entry(std::string& buf, const std::string& name,
                            const ContainerValue& v) {
  if (name.size() > 0xffff)
    throw ContainerError(ContainerErrc::bad_entry, "entry name too long: " + name);
  put_u16(buf, static_cast<std::uint16_t>(name.size()));
  buf.append(name);
  const Shape& shape =
      std::holds_alternative<RTensor>(v) ? std::get<RTensor>(v).shape : std::get<CTensor>(v).shape;
  if (shape.size() > 0xff)
    throw ContainerError(ContainerErrc::bad_entry, "rank too large for entry: " + name);
  buf.push_back(std::holds_alternative<RTensor>(v) ? '\0' : '\1');
  buf.push_back(static_cast<char>(shape.size()));
  for (std::size_t d : shape) {
    if (d > 0xffffffffull)
      throw ContainerError(ContainerErrc::bad_entry, "dimension too large for entry: " + name);
    put_u32(buf, static_cast<std::uint32_t>(d));
  }
  if (std::holds_alternative<RTensor>(v)) {
    for (double d : std::get<RTensor>(v).data) put_f64(buf, d);
  } else {
    const CTensor& z = std::get<CTensor>(v);
    for (double d : z.re) put_f64(buf, d);
    for (double d : z.im) put_f64(buf, d);
  }
}

}  // namespace detail

inline std::string serialize_container(const TensorContainer& c) {
  std::string buf = "CXT1";
  detail::put_u32(buf, static_cast<std::uint32_t>(c.entries.size()));
  for (const auto& [name, value] : c.entries) detail::serialize_entry(buf, name, value);
  return buf;
}

inline TensorContainer parse_container(const unsigned char* data, std::size_t size) {
  detail::ByteReader r(data, size);
  const std::string magic = r.bytes(4);
  if (magic.substr(0, 3) != "CXT")
    throw ContainerError(ContainerErrc::bad_magic, "bad container magic");
  if (magic[3] != '1')
    throw ContainerError(ContainerErrc::unsupported_version,
                         "unsupported container version: " + magic.substr(3));
  TensorContainer c;
  const std::uint32_t count = r.u32();
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint16_t name_len = r.u16();
    std::string name = r.bytes(name_len);
    const std::uint8_t kind = r.u8();
    if (kind > 1)
      throw ContainerError(ContainerErrc::bad_entry, "unknown tensor kind in entry: " + name);
    const std::uint8_t rank = r.u8();
    Shape shape(rank);
    for (std::uint8_t i = 0; i < rank; ++i) shape[i] = r.u32();
    const std::size_t n = shape_numel(shape);
    std::vector<double> re(n);
    for (std::size_t i = 0; i < n; ++i) re[i] = r.f64();
    if (kind == 0) {
      c.put(std::move(name), RTensor(std::move(shape), std::move(re)));
    } else {
      std::vector<double> im(n);
      for (std::size_t i = 0; i < n; ++i) im[i] = r.f64();
      c.put(std::move(name), CTensor(std::move(shape), std::move(re), std::move(im)));
    }
  }
  return c;
}

// Exclusive-access file I/O for containers.
inline void write_container(const std::string& path, const TensorContainer& c) {
  const std::string buf = serialize_container(c);
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> f(std::fopen(path.c_str(), "wb"),
                                                    &std::fclose);
  if (!f) throw ContainerError(ContainerErrc::io, "cannot open for writing: " + path);
  if (std::fwrite(buf.data(), 1, buf.size(), f.get()) != buf.size())
    throw ContainerError(ContainerErrc::io, "short write: " + path);
}

inline TensorContainer read_container(const std::string& path) {
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> f(std::fopen(path.c_str(), "rb"),
                                                    &std::fclose);
  if (!f) throw ContainerError(ContainerErrc::io, "cannot open for reading: " + path);
  std::fseek(f.get(), 0, SEEK_END);
  const long size = std::ftell(f.get());
  std::fseek(f.get(), 0, SEEK_SET);
  std::vector<unsigned char> buf(static_cast<std::size_t>(size));
  if (size > 0 && std::fread(buf.data(), 1, buf.size(), f.get()) != buf.size())
    throw ContainerError(ContainerErrc::io, "short read: " + path);
  return parse_container(buf.data(), buf.size());
}

// Helpers for UTF-8 payloads stored as byte-valued real tensors ("meta/..."
// checkpoint entries).
inline RTensor text_tensor(const std::string& text) {
  RTensor t({text.size()});
  for (std::size_t i = 0; i < text.size(); ++i)
    t.data[i] = static_cast<unsigned char>(text[i]);
  return t;
}

inline std::string tensor_text(const RTensor& t) {
  std::string s;
  s.reserve(t.data.size());
  for (double d : t.data) s.push_back(static_cast<char>(static_cast<unsigned char>(d)));
  return s;
}

}  // namespace fc2mfn
