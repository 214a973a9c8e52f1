#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "pktimg/error.hpp"

namespace pktimg {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

template <typename T>
  requires std::is_unsigned_v<T>
constexpr T load_be(ByteView in, std::size_t at) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v = T((v << 8) | in[at + i]);
  return v;
}

template <typename T>
  requires std::is_unsigned_v<T>
constexpr T load_le(ByteView in, std::size_t at) {
  T v = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) v = T((v << 8) | in[at + i]);
  return v;
}

// Bounds-checked little-endian cursor used by the dataset and checkpoint
// decoders. Every failure reports the offset where the read started.
class ByteReader {
 public:
  ByteReader(ByteView data, std::string context)
      : data_(data), context_(std::move(context)) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  template <typename T>
    requires std::is_unsigned_v<T>
  T le() {
    require(sizeof(T));
    T v = load_le<T>(data_, pos_);
    pos_ += sizeof(T);
    return v;
  }

  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }

  ByteView take(std::size_t n) {
    require(n);
    ByteView v = data_.subspan(pos_, n);
    pos_ += n;
    return v;
  }

 private:
  void require(std::size_t n) const {
    if (remaining() < n) {
      throw FormatError(context_ + ": truncated, needed " + std::to_string(n) +
                            " more bytes",
                        pos_);
    }
  }

  ByteView data_;
  std::string context_;
  std::size_t pos_ = 0;
};

class ByteWriter {
 public:
  template <typename T>
    requires std::is_unsigned_v<T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(std::uint8_t(v >> (8 * i)));
    }
  }

  template <typename T>
    requires std::is_unsigned_v<T>
  void be(T v) {
    for (std::size_t i = sizeof(T); i-- > 0;) {
      out_.push_back(std::uint8_t(v >> (8 * i)));
    }
  }

  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }

  void bytes(ByteView v) { out_.insert(out_.end(), v.begin(), v.end()); }
  void bytes(std::string_view v) { out_.insert(out_.end(), v.begin(), v.end()); }

  const Bytes& data() const& noexcept { return out_; }
  Bytes&& take() && noexcept { return std::move(out_); }

 private:
  Bytes out_;
};

inline Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::string& path, ByteView data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
  if (!out) throw FormatError("short write to " + path);
}

}  // namespace pktimg
