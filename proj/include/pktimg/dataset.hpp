#pragma once

// Labeled image collections and their on-disk format.
//
// File layout, all multi-byte fields little-endian:
//   "PIMG" | version u16 = 1 | encoder u8 | pixel_max u8 | width u16 |
//   height u16 | class count u16 | record count u32          (18 bytes)
//   class names: (u16 byte length, UTF-8 bytes) x class count
//   records:     (width*height pixel bytes, label u16) x record count

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "pktimg/byteio.hpp"
#include "pktimg/encoders.hpp"
#include "pktimg/error.hpp"
#include "pktimg/packet.hpp"
#include "pktimg/rng.hpp"

namespace pktimg {

inline constexpr std::string_view kDatasetMagic = "PIMG";
inline constexpr std::uint16_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderLen = 18;

struct ImageRecord {
  Bytes pixels;
  std::uint16_t label = 0;

  bool operator==(const ImageRecord&) const = default;
};

struct ImageDataset {
  EncoderId encoder = EncoderId::kPayload784;
  std::size_t width = 0;
  std::size_t height = 0;
  std::uint8_t pixel_max = 255;
  std::vector<std::string> labels;  // class id -> class name
  std::vector<ImageRecord> records;

  std::size_t num_classes() const { return labels.size(); }
  std::size_t pixel_count() const { return width * height; }

  PseudoImage image(std::size_t i) const {
    return PseudoImage{width, height, records.at(i).pixels, encoder, pixel_max,
                       records.at(i).label};
  }

  // Same header and label table, no records.
  ImageDataset empty_like() const {
    ImageDataset out;
    out.encoder = encoder;
    out.width = width;
    out.height = height;
    out.pixel_max = pixel_max;
    out.labels = labels;
    return out;
  }

  bool operator==(const ImageDataset&) const = default;
};

inline void validate(const ImageDataset& ds) {
  if (ds.width == 0 || ds.height == 0 || ds.width > 0xffff || ds.height > 0xffff) {
    throw ContractError("dataset: width/height must be in 1..65535");
  }
  if (ds.labels.size() > 0xffff) throw ContractError("dataset: too many classes");
  for (const std::string& name : ds.labels) {
    if (name.size() > 0xffff) throw ContractError("dataset: class name too long");
  }
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const ImageRecord& r = ds.records[i];
    if (r.pixels.size() != ds.pixel_count()) {
      throw ContractError("dataset: record " + std::to_string(i) + " has wrong pixel count");
    }
    if (r.label >= ds.labels.size()) {
      throw ContractError("dataset: record " + std::to_string(i) + " label out of range");
    }
    if (std::any_of(r.pixels.begin(), r.pixels.end(),
                    [&](std::uint8_t px) { return px > ds.pixel_max; })) {
      throw ContractError("dataset: record " + std::to_string(i) + " exceeds pixel_max");
    }
  }
}

inline Bytes serialize_dataset(const ImageDataset& ds) {
  validate(ds);
  ByteWriter w;
  w.bytes(kDatasetMagic);
  w.le(kDatasetVersion);
  w.le(static_cast<std::uint8_t>(ds.encoder));
  w.le(ds.pixel_max);
  w.le(static_cast<std::uint16_t>(ds.width));
  w.le(static_cast<std::uint16_t>(ds.height));
  w.le(static_cast<std::uint16_t>(ds.labels.size()));
  w.le(static_cast<std::uint32_t>(ds.records.size()));
  for (const std::string& name : ds.labels) {
    w.le(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
  }
  for (const ImageRecord& r : ds.records) {
    w.bytes(r.pixels);
    w.le(r.label);
  }
  return std::move(w).take();
}

inline ImageDataset parse_dataset(ByteView data) {
  ByteReader in(data, "dataset");
  const ByteView magic = in.take(4);
  if (!std::equal(magic.begin(), magic.end(), kDatasetMagic.begin())) {
    throw FormatError("dataset: bad magic", 0);
  }
  const std::size_t version_at = in.offset();
  if (in.le<std::uint16_t>() != kDatasetVersion) {
    throw FormatError("dataset: unsupported version", version_at);
  }
  ImageDataset ds;
  const std::size_t encoder_at = in.offset();
  const auto encoder = in.le<std::uint8_t>();
  if (encoder > static_cast<std::uint8_t>(EncoderId::kFingerprint)) {
    throw FormatError("dataset: unknown encoder id", encoder_at);
  }
  ds.encoder = static_cast<EncoderId>(encoder);
  ds.pixel_max = in.le<std::uint8_t>();
  ds.width = in.le<std::uint16_t>();
  ds.height = in.le<std::uint16_t>();
  if (ds.width == 0 || ds.height == 0) {
    throw FormatError("dataset: zero image dimension", in.offset() - 4);
  }
  const std::size_t classes = in.le<std::uint16_t>();
  const std::size_t count = in.le<std::uint32_t>();
  ds.labels.reserve(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t len = in.le<std::uint16_t>();
    const ByteView name = in.take(len);
    ds.labels.emplace_back(name.begin(), name.end());
  }
  const std::size_t record_len = ds.pixel_count() + 2;
  if (in.remaining() / record_len < count) {
    throw FormatError("dataset: truncated body, expected " + std::to_string(count) + " records",
                      in.offset());
  }
  ds.records.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = in.offset();
    const ByteView px = in.take(ds.pixel_count());
    for (std::size_t k = 0; k < px.size(); ++k) {
      if (px[k] > ds.pixel_max) throw FormatError("dataset: pixel exceeds pixel_max", at + k);
    }
    ImageRecord r{Bytes(px.begin(), px.end()), 0};
    const std::size_t label_at = in.offset();
    r.label = in.le<std::uint16_t>();
    if (r.label >= classes) throw FormatError("dataset: label out of range", label_at);
    ds.records.push_back(std::move(r));
  }
  if (in.remaining() != 0) {
    throw FormatError("dataset: trailing bytes after last record", in.offset());
  }
  return ds;
}

inline void write_dataset(const ImageDataset& ds, const std::string& path) {
  write_file(path, serialize_dataset(ds));
}

inline ImageDataset read_dataset(const std::string& path) {
  return parse_dataset(read_file(path));
}

// ---------------------------------------------------------------------------
// Labeling

inline std::optional<MacAddress> parse_mac(std::string_view text) {
  MacAddress mac{};
  std::size_t pos = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    if (i > 0) {
      if (pos >= text.size() || (text[pos] != ':' && text[pos] != '-')) return std::nullopt;
      ++pos;
    }
    int value = 0;
    for (int d = 0; d < 2; ++d, ++pos) {
      if (pos >= text.size()) return std::nullopt;
      const char ch = text[pos];
      int nibble;
      if (ch >= '0' && ch <= '9') nibble = ch - '0';
      else if (ch >= 'a' && ch <= 'f') nibble = ch - 'a' + 10;
      else if (ch >= 'A' && ch <= 'F') nibble = ch - 'A' + 10;
      else return std::nullopt;
      value = value * 16 + nibble;
    }
    mac[i] = static_cast<std::uint8_t>(value);
  }
  if (pos != text.size()) return std::nullopt;
  return mac;
}

inline std::string format_mac(const MacAddress& mac) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  for (std::size_t i = 0; i < mac.size(); ++i) {
    if (i) s += ':';
    s += kHex[mac[i] >> 4];
    s += kHex[mac[i] & 0x0f];
  }
  return s;
}

struct MacLabelMap {
  std::map<MacAddress, std::string> entries;
};

using LabelResult = std::variant<std::string, Skip>;

inline LabelResult label_packet(const ParsedPacket& p, const MacLabelMap& map) {
  const auto it = map.entries.find(p.src_mac);
  if (it == map.entries.end()) return Skip{SkipReason::kUnknownDevice};
  return it->second;
}

// ---------------------------------------------------------------------------
// Splitting

namespace detail {

// ceil(n * fraction), robust to representation error (0.7 * 10 is not 7).
inline std::size_t test_count(std::size_t n, double fraction) {
  const double x = static_cast<double>(n) * fraction;
  const double r = std::round(x);
  if (std::abs(x - r) < 1e-9) return static_cast<std::size_t>(r);
  return static_cast<std::size_t>(std::ceil(x));
}

}  // namespace detail

struct Split {
  ImageDataset train;
  ImageDataset test;
};

// Per class, ceil(n_c * test_fraction) records go to the test side, chosen
// by a seeded shuffle. Both sides keep the original record order.
inline Split split_stratified(const ImageDataset& ds, double test_fraction,
                              std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ContractError("test fraction must lie strictly between 0 and 1");
  }
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    by_class.at(ds.records[i].label).push_back(i);
  }
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].size() < 2) {
      throw ContractError("class '" + ds.labels[c] + "' has fewer than 2 records");
    }
  }
  Rng rng(seed);
  std::vector<bool> in_test(ds.records.size(), false);
  for (auto& members : by_class) {
    rng.shuffle(std::span<std::size_t>(members));
    const std::size_t k = detail::test_count(members.size(), test_fraction);
    for (std::size_t j = 0; j < k; ++j) in_test[members[j]] = true;
  }
  Split out{ds.empty_like(), ds.empty_like()};
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    (in_test[i] ? out.test : out.train).records.push_back(ds.records[i]);
  }
  return out;
}

}  // namespace pktimg
