#pragma once

// Link/network/transport decoding of captured Ethernet frames, plus the
// flow and session keys built from the decoded 5-tuple.

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <variant>

#include "pktimg/byteio.hpp"
#include "pktimg/pcap.hpp"

namespace pktimg {

inline constexpr std::size_t kEthernetHeaderLen = 14;
inline constexpr std::size_t kVlanTagLen = 4;
inline constexpr std::uint16_t kEtherTypeIpv4 = 0x0800;
inline constexpr std::uint16_t kEtherTypeIpv6 = 0x86dd;
inline constexpr std::uint16_t kEtherTypeVlan = 0x8100;
inline constexpr std::uint8_t kProtoTcp = 6;
inline constexpr std::uint8_t kProtoUdp = 17;
inline constexpr std::size_t kUdpHeaderLen = 8;
inline constexpr std::size_t kIpv6HeaderLen = 40;

namespace tcp_flags {
inline constexpr std::uint8_t kFin = 0x01;
inline constexpr std::uint8_t kSyn = 0x02;
inline constexpr std::uint8_t kRst = 0x04;
inline constexpr std::uint8_t kPsh = 0x08;
inline constexpr std::uint8_t kAck = 0x10;
}  // namespace tcp_flags

using MacAddress = std::array<std::uint8_t, 6>;

struct IpAddress {
  std::array<std::uint8_t, 16> octets{};
  std::uint8_t width = 4;  // 4 or 16

  static IpAddress v4(std::uint8_t a, std::uint8_t b, std::uint8_t c,
                      std::uint8_t d) {
    IpAddress ip;
    ip.octets = {a, b, c, d};
    return ip;
  }

  ByteView bytes() const { return ByteView(octets).first(width); }

  auto operator<=>(const IpAddress&) const = default;
  bool operator==(const IpAddress&) const = default;
};

struct FiveTuple {
  IpAddress src_ip;
  IpAddress dst_ip;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t proto = 0;

  auto operator<=>(const FiveTuple&) const = default;
  bool operator==(const FiveTuple&) const = default;
};

enum class Transport : std::uint8_t { kTcp, kUdp };

struct ParsedPacket {
  FiveTuple five_tuple;
  Transport transport = Transport::kUdp;
  std::optional<std::uint8_t> tcp_flags;
  Bytes ip_payload;  // everything after the IP header
  Bytes l7_payload;  // everything after the transport header
  MacAddress src_mac{};
  MacAddress dst_mac{};
  bool ipv6 = false;
  std::size_t ip_header_len = 0;
  std::size_t link_header_len = 0;

  std::size_t transport_header_len() const {
    return ip_payload.size() - l7_payload.size();
  }
};

enum class SkipReason : std::uint8_t {
  kUnsupportedLink,
  kNonIp,
  kUnsupportedTransport,
  kTruncated,
  kFragment,
  kIpv6Extension,
  kUnknownDevice,
  kHandshake,
  kDns,
  kEmptyPayload,
  kIpv6Unsupported,
};

inline constexpr std::string_view to_string(SkipReason r) {
  switch (r) {
    case SkipReason::kUnsupportedLink: return "unsupported-link";
    case SkipReason::kNonIp: return "non-ip";
    case SkipReason::kUnsupportedTransport: return "unsupported-transport";
    case SkipReason::kTruncated: return "truncated";
    case SkipReason::kFragment: return "fragment";
    case SkipReason::kIpv6Extension: return "ipv6-extension";
    case SkipReason::kUnknownDevice: return "unknown-device";
    case SkipReason::kHandshake: return "handshake";
    case SkipReason::kDns: return "dns";
    case SkipReason::kEmptyPayload: return "empty-payload";
    case SkipReason::kIpv6Unsupported: return "ipv6-unsupported";
  }
  return "unknown";
}

struct Skip {
  SkipReason reason;
  bool operator==(const Skip&) const = default;
};

using ParseResult = std::variant<ParsedPacket, Skip>;

namespace detail {

inline bool is_ipv6_extension_header(std::uint8_t next) {
  switch (next) {
    case 0:    // hop-by-hop
    case 43:   // routing
    case 44:   // fragment
    case 50:   // ESP
    case 51:   // AH
    case 60:   // destination options
    case 135:  // mobility
    case 139:  // HIP
    case 140:  // shim6
      return true;
    default:
      return false;
  }
}

}  // namespace detail

// Total over arbitrary bytes: anything that cannot be decoded becomes a Skip.
inline ParseResult parse_packet(const RawPacket& pkt, std::uint32_t link_type) {
  if (link_type != kLinkTypeEthernet) return Skip{SkipReason::kUnsupportedLink};

  const ByteView frame(pkt.data);
  if (frame.size() < kEthernetHeaderLen) return Skip{SkipReason::kTruncated};

  ParsedPacket out;
  std::copy_n(frame.begin(), 6, out.dst_mac.begin());
  std::copy_n(frame.begin() + 6, 6, out.src_mac.begin());
  std::size_t pos = 12;
  std::uint16_t ether_type = load_be<std::uint16_t>(frame, pos);
  pos += 2;
  if (ether_type == kEtherTypeVlan) {
    if (frame.size() < pos + kVlanTagLen) return Skip{SkipReason::kTruncated};
    ether_type = load_be<std::uint16_t>(frame, pos + 2);
    pos += kVlanTagLen;
  }
  out.link_header_len = pos;

  // [pos, ip_end) is the IP packet as bounded by its own length field, which
  // drops Ethernet trailer padding.
  std::size_t ip_end = frame.size();
  std::uint8_t proto = 0;
  if (ether_type == kEtherTypeIpv4) {
    if (frame.size() < pos + 20) return Skip{SkipReason::kTruncated};
    if ((frame[pos] >> 4) != 4) return Skip{SkipReason::kNonIp};
    const std::size_t ihl = std::size_t(frame[pos] & 0x0f) * 4;
    if (ihl < 20 || frame.size() < pos + ihl) return Skip{SkipReason::kTruncated};
    const std::size_t total_len = load_be<std::uint16_t>(frame, pos + 2);
    if (total_len < ihl) return Skip{SkipReason::kTruncated};
    ip_end = std::min(ip_end, pos + total_len);
    const std::uint16_t frag = load_be<std::uint16_t>(frame, pos + 6);
    if ((frag & 0x1fff) != 0) return Skip{SkipReason::kFragment};
    proto = frame[pos + 9];
    out.five_tuple.src_ip.width = 4;
    out.five_tuple.dst_ip.width = 4;
    std::copy_n(frame.begin() + pos + 12, 4, out.five_tuple.src_ip.octets.begin());
    std::copy_n(frame.begin() + pos + 16, 4, out.five_tuple.dst_ip.octets.begin());
    out.ip_header_len = ihl;
  } else if (ether_type == kEtherTypeIpv6) {
    if (frame.size() < pos + kIpv6HeaderLen) return Skip{SkipReason::kTruncated};
    if ((frame[pos] >> 4) != 6) return Skip{SkipReason::kNonIp};
    const std::size_t payload_len = load_be<std::uint16_t>(frame, pos + 4);
    ip_end = std::min(ip_end, pos + kIpv6HeaderLen + payload_len);
    proto = frame[pos + 6];
    if (detail::is_ipv6_extension_header(proto)) {
      return Skip{SkipReason::kIpv6Extension};
    }
    out.five_tuple.src_ip.width = 16;
    out.five_tuple.dst_ip.width = 16;
    std::copy_n(frame.begin() + pos + 8, 16, out.five_tuple.src_ip.octets.begin());
    std::copy_n(frame.begin() + pos + 24, 16, out.five_tuple.dst_ip.octets.begin());
    out.ip_header_len = kIpv6HeaderLen;
    out.ipv6 = true;
  } else {
    return Skip{SkipReason::kNonIp};
  }
  out.five_tuple.proto = proto;
  pos += out.ip_header_len;

  const ByteView ip_payload = frame.subspan(pos, ip_end - pos);
  std::size_t transport_len = 0;
  if (proto == kProtoTcp) {
    if (ip_payload.size() < 20) return Skip{SkipReason::kTruncated};
    transport_len = std::size_t(ip_payload[12] >> 4) * 4;
    if (transport_len < 20 || ip_payload.size() < transport_len) {
      return Skip{SkipReason::kTruncated};
    }
    out.transport = Transport::kTcp;
    out.tcp_flags = ip_payload[13];
  } else if (proto == kProtoUdp) {
    if (ip_payload.size() < kUdpHeaderLen) return Skip{SkipReason::kTruncated};
    transport_len = kUdpHeaderLen;
    out.transport = Transport::kUdp;
  } else {
    return Skip{SkipReason::kUnsupportedTransport};
  }
  out.five_tuple.src_port = load_be<std::uint16_t>(ip_payload, 0);
  out.five_tuple.dst_port = load_be<std::uint16_t>(ip_payload, 2);
  out.ip_payload.assign(ip_payload.begin(), ip_payload.end());
  out.l7_payload.assign(ip_payload.begin() + static_cast<std::ptrdiff_t>(transport_len),
                        ip_payload.end());
  return out;
}

// Direction-preserving key.
inline FiveTuple flow_key(const ParsedPacket& p) { return p.five_tuple; }

// Direction-agnostic key: the smaller (ip, port) endpoint comes first.
inline FiveTuple session_key(const ParsedPacket& p) {
  const FiveTuple& t = p.five_tuple;
  const auto src = std::tie(t.src_ip, t.src_port);
  const auto dst = std::tie(t.dst_ip, t.dst_port);
  if (dst < src) {
    return FiveTuple{t.dst_ip, t.src_ip, t.dst_port, t.src_port, t.proto};
  }
  return t;
}

// TCP segment carrying no load: SYN, SYN-ACK, bare ACK, FIN, RST, keep-alive.
inline bool is_handshake(const ParsedPacket& p) {
  return p.transport == Transport::kTcp && p.l7_payload.empty();
}

// mDNS (5353) is deliberately not matched.
inline bool is_dns(const ParsedPacket& p) {
  return p.five_tuple.src_port == 53 || p.five_tuple.dst_port == 53;
}

inline std::string to_string(const IpAddress& ip) {
  std::string s;
  if (ip.width == 4) {
    for (std::size_t i = 0; i < 4; ++i) {
      if (i) s += '.';
      s += std::to_string(ip.octets[i]);
    }
    return s;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  for (std::size_t i = 0; i < 16; i += 2) {
    if (i) s += ':';
    for (std::size_t j = i; j < i + 2; ++j) {
      s += kHex[ip.octets[j] >> 4];
      s += kHex[ip.octets[j] & 0x0f];
    }
  }
  return s;
}

}  // namespace pktimg
