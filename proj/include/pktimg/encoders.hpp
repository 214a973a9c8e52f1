#pragma once

// Packet-to-image encoders. Pixels are stored as raw 8-bit values with the
// encoder's native ceiling (15 for nibbles, 255 for bytes); scaling to [0,1]
// happens at the network input.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pktimg/byteio.hpp"
#include "pktimg/error.hpp"
#include "pktimg/packet.hpp"

namespace pktimg {

enum class EncoderId : std::uint8_t {
  kLim = 0,
  kLotfollahi = 1,
  kWang = 2,
  kPayload784 = 3,
  kFingerprint = 4,
};

inline constexpr std::string_view to_string(EncoderId e) {
  switch (e) {
    case EncoderId::kLim: return "lim";
    case EncoderId::kLotfollahi: return "lotfollahi";
    case EncoderId::kWang: return "wang";
    case EncoderId::kPayload784: return "payload784";
    case EncoderId::kFingerprint: return "fingerprint";
  }
  return "unknown";
}

inline std::optional<EncoderId> parse_encoder(std::string_view name) {
  for (std::uint8_t i = 0; i <= 4; ++i) {
    if (to_string(EncoderId(i)) == name) return EncoderId(i);
  }
  return std::nullopt;
}

struct PseudoImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
  EncoderId encoder = EncoderId::kPayload784;
  std::uint8_t pixel_max = 255;
  std::optional<std::uint16_t> label;

  bool operator==(const PseudoImage&) const = default;
};

using EncodeResult = std::variant<PseudoImage, Skip>;

inline constexpr std::array<std::size_t, 4> kLimSizes = {36, 64, 256, 1024};
inline constexpr std::size_t kLotfollahiWidth = 37;
inline constexpr std::size_t kLotfollahiHeight = 40;
inline constexpr std::size_t kLotfollahiCapacity = kLotfollahiWidth * kLotfollahiHeight;
inline constexpr std::size_t kSide28 = 28;
inline constexpr std::size_t kCapacity784 = kSide28 * kSide28;
inline constexpr std::size_t kWangHeaderLen = 13;
inline constexpr std::size_t kWangPayloadLen = kCapacity784 - kWangHeaderLen;

// Nearest member of kLimSizes to a nibble count; ties go to the smaller size.
inline std::size_t lim_target_size(std::size_t nibbles) {
  std::size_t best = kLimSizes.front();
  for (std::size_t t : kLimSizes) {
    const auto dist = [&](std::size_t s) { return s > nibbles ? s - nibbles : nibbles - s; };
    if (dist(t) < dist(best)) best = t;
  }
  return best;
}

inline bool is_lim_size(std::size_t n) {
  return std::find(kLimSizes.begin(), kLimSizes.end(), n) != kLimSizes.end();
}

namespace detail {

inline std::size_t isqrt(std::size_t n) {
  auto r = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  while (r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  return r;
}

// Copies up to `capacity` bytes of src into a zero-filled grid.
inline PseudoImage fill_grid(ByteView src, std::size_t width, std::size_t height,
                             EncoderId encoder, std::uint8_t pixel_max) {
  PseudoImage img;
  img.width = width;
  img.height = height;
  img.encoder = encoder;
  img.pixel_max = pixel_max;
  img.pixels.assign(width * height, 0);
  std::copy_n(src.begin(), std::min(src.size(), img.pixels.size()), img.pixels.begin());
  return img;
}

}  // namespace detail

// Each byte becomes two pixels, high nibble first. With `fixed_size` unset
// the nibble series is cut or zero-padded to the nearest allowed size.
inline EncodeResult encode_lim(ByteView payload,
                               std::optional<std::size_t> fixed_size = std::nullopt) {
  if (payload.empty()) return Skip{SkipReason::kEmptyPayload};
  if (fixed_size && !is_lim_size(*fixed_size)) {
    throw ContractError("lim size must be one of 36, 64, 256, 1024");
  }
  const std::size_t target = fixed_size.value_or(lim_target_size(2 * payload.size()));
  Bytes nibbles;
  nibbles.reserve(std::min(target, 2 * payload.size()));
  for (std::uint8_t b : payload) {
    if (nibbles.size() >= target) break;
    nibbles.push_back(b >> 4);
    nibbles.push_back(b & 0x0f);
  }
  const std::size_t side = detail::isqrt(target);
  return detail::fill_grid(nibbles, side, side, EncoderId::kLim, 15);
}

// IP payload (transport header included), zero-padded or cut to 1480 bytes.
inline EncodeResult encode_lotfollahi(const ParsedPacket& p) {
  if (is_dns(p)) return Skip{SkipReason::kDns};
  if (is_handshake(p)) return Skip{SkipReason::kHandshake};
  if (p.ip_payload.empty()) return Skip{SkipReason::kEmptyPayload};
  return detail::fill_grid(p.ip_payload, kLotfollahiWidth, kLotfollahiHeight,
                           EncoderId::kLotfollahi, 255);
}

// 13 session pixels (src ip, dst ip, src port, dst port, proto) followed by
// the first 771 bytes of the L7 payload. IPv4 only.
inline EncodeResult encode_wang(const ParsedPacket& p) {
  if (p.ipv6 || p.five_tuple.src_ip.width != 4) {
    return Skip{SkipReason::kIpv6Unsupported};
  }
  if (p.l7_payload.empty()) {
    return Skip{is_handshake(p) ? SkipReason::kHandshake : SkipReason::kEmptyPayload};
  }
  const FiveTuple& t = p.five_tuple;
  Bytes buf;
  buf.reserve(kCapacity784);
  buf.insert(buf.end(), t.src_ip.octets.begin(), t.src_ip.octets.begin() + 4);
  buf.insert(buf.end(), t.dst_ip.octets.begin(), t.dst_ip.octets.begin() + 4);
  buf.push_back(std::uint8_t(t.src_port >> 8));
  buf.push_back(std::uint8_t(t.src_port));
  buf.push_back(std::uint8_t(t.dst_port >> 8));
  buf.push_back(std::uint8_t(t.dst_port));
  buf.push_back(t.proto);
  const std::size_t n = std::min(p.l7_payload.size(), kWangPayloadLen);
  buf.insert(buf.end(), p.l7_payload.begin(), p.l7_payload.begin() + static_cast<std::ptrdiff_t>(n));
  return detail::fill_grid(buf, kSide28, kSide28, EncoderId::kWang, 255);
}

// Headers stripped: the L7 payload alone, cut or zero-padded to 28x28.
inline EncodeResult encode_payload784(const ParsedPacket& p) {
  if (p.l7_payload.empty()) {
    return Skip{is_handshake(p) ? SkipReason::kHandshake : SkipReason::kEmptyPayload};
  }
  return detail::fill_grid(p.l7_payload, kSide28, kSide28, EncoderId::kPayload784, 255);
}

// Applies the lim encoder to a packet's L7 payload, naming TCP empties as
// handshakes like the other payload encoders do.
inline EncodeResult encode_lim(const ParsedPacket& p,
                               std::optional<std::size_t> fixed_size = std::nullopt) {
  if (is_handshake(p)) return Skip{SkipReason::kHandshake};
  return encode_lim(ByteView(p.l7_payload), fixed_size);
}

inline EncodeResult encode_packet(EncoderId encoder, const ParsedPacket& p,
                                  std::optional<std::size_t> lim_size = std::nullopt) {
  switch (encoder) {
    case EncoderId::kLim: return encode_lim(p, lim_size);
    case EncoderId::kLotfollahi: return encode_lotfollahi(p);
    case EncoderId::kWang: return encode_wang(p);
    case EncoderId::kPayload784: return encode_payload784(p);
    case EncoderId::kFingerprint: break;
  }
  throw ContractError("fingerprint images are built from feature vectors, not packets");
}

struct FeatureVector {
  std::vector<double> values;
  std::vector<std::string> names;
};

struct FeatureRange {
  double min = 0.0;
  double max = 0.0;
};

using Calibration = std::map<std::string, FeatureRange, std::less<>>;

// Per-feature min/max over a set of vectors sharing one name list.
inline Calibration calibrate(const std::vector<FeatureVector>& rows) {
  Calibration calib;
  for (const FeatureVector& row : rows) {
    for (std::size_t i = 0; i < row.values.size(); ++i) {
      auto [it, fresh] = calib.try_emplace(row.names[i], FeatureRange{row.values[i], row.values[i]});
      if (!fresh) {
        it->second.min = std::min(it->second.min, row.values[i]);
        it->second.max = std::max(it->second.max, row.values[i]);
      }
    }
  }
  return calib;
}

// Min-max scales each feature to 0..255 (half-up rounding, values outside
// the calibrated range clamp) and lays them out on the smallest square grid.
inline PseudoImage encode_fingerprint(const FeatureVector& v, const Calibration& calib) {
  if (v.values.size() != v.names.size()) {
    throw ContractError("feature vector: value/name count mismatch");
  }
  if (v.values.empty()) throw ContractError("feature vector is empty");
  Bytes scaled;
  scaled.reserve(v.values.size());
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    const auto it = calib.find(v.names[i]);
    if (it == calib.end()) throw ConfigError("unknown feature '" + v.names[i] + "'");
    const auto [lo, hi] = it->second;
    if (!std::isfinite(v.values[i])) {
      throw ContractError("feature '" + v.names[i] + "' is not finite");
    }
    if (hi < lo) throw ConfigError("feature '" + v.names[i] + "' has min > max");
    double px = 0.0;
    if (hi > lo) {
      px = std::floor((v.values[i] - lo) / (hi - lo) * 255.0 + 0.5);
    }
    scaled.push_back(static_cast<std::uint8_t>(std::clamp(px, 0.0, 255.0)));
  }
  std::size_t side = detail::isqrt(scaled.size());
  if (side * side < scaled.size()) ++side;
  return detail::fill_grid(scaled, side, side, EncoderId::kFingerprint, 255);
}

// Binary PGM (P5) with maxval = pixel_max.
inline Bytes render_pgm(const PseudoImage& img) {
  ByteWriter w;
  w.bytes("P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
          "\n" + std::to_string(img.pixel_max) + "\n");
  w.bytes(img.pixels);
  return std::move(w).take();
}

}  // namespace pktimg
