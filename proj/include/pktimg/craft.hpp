#pragma once

// Builds well-formed Ethernet frames for fixtures and synthetic captures.

#include <cstdint>
#include <optional>

#include "pktimg/byteio.hpp"
#include "pktimg/packet.hpp"

namespace pktimg {

struct FrameSpec {
  MacAddress src_mac{0x02, 0, 0, 0, 0, 1};
  MacAddress dst_mac{0x02, 0, 0, 0, 0, 2};
  std::optional<std::uint16_t> vlan_id;
  IpAddress src_ip = IpAddress::v4(10, 0, 0, 1);
  IpAddress dst_ip = IpAddress::v4(10, 0, 0, 2);
  std::uint16_t src_port = 1024;
  std::uint16_t dst_port = 80;
  std::uint8_t proto = kProtoTcp;
  std::uint8_t tcp_flags = tcp_flags::kAck | tcp_flags::kPsh;
  std::uint32_t tcp_seq = 1;
  std::uint8_t tcp_options_words = 0;  // extra 32-bit words beyond 20 bytes
  std::uint8_t ipv4_options_words = 0;
  Bytes payload;
};

namespace detail {

inline std::uint16_t ipv4_checksum(ByteView header) {
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i + 1 < header.size(); i += 2) {
    sum += load_be<std::uint16_t>(header, i);
  }
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum);
}

}  // namespace detail

inline Bytes build_frame(const FrameSpec& s) {
  ByteWriter transport;
  transport.be(s.src_port);
  transport.be(s.dst_port);
  if (s.proto == kProtoTcp) {
    transport.be(s.tcp_seq);
    transport.be(std::uint32_t{0});  // ack number
    transport.be(std::uint8_t((5 + s.tcp_options_words) << 4));
    transport.be(s.tcp_flags);
    transport.be(std::uint16_t{65535});  // window
    transport.be(std::uint16_t{0});      // checksum (not computed)
    transport.be(std::uint16_t{0});      // urgent pointer
    for (std::uint8_t i = 0; i < s.tcp_options_words; ++i) {
      transport.be(std::uint32_t{0x01010101});  // NOPs
    }
  } else {
    transport.be(std::uint16_t(kUdpHeaderLen + s.payload.size()));
    transport.be(std::uint16_t{0});
  }
  transport.bytes(s.payload);
  const Bytes& l4 = transport.data();

  ByteWriter f;
  f.bytes(s.dst_mac);
  f.bytes(s.src_mac);
  if (s.vlan_id) {
    f.be(kEtherTypeVlan);
    f.be(*s.vlan_id);
  }
  if (s.src_ip.width == 4) {
    f.be(kEtherTypeIpv4);
    const std::size_t ihl = 5 + s.ipv4_options_words;
    ByteWriter ip;
    ip.be(std::uint8_t(0x40 | ihl));
    ip.be(std::uint8_t{0});
    ip.be(std::uint16_t(ihl * 4 + l4.size()));
    ip.be(std::uint16_t{0});       // identification
    ip.be(std::uint16_t{0x4000});  // DF
    ip.be(std::uint8_t{64});
    ip.be(s.proto);
    ip.be(std::uint16_t{0});
    ip.bytes(s.src_ip.bytes());
    ip.bytes(s.dst_ip.bytes());
    for (std::uint8_t i = 0; i < s.ipv4_options_words; ++i) {
      ip.be(std::uint32_t{0x01010101});
    }
    Bytes header = std::move(ip).take();
    const std::uint16_t sum = detail::ipv4_checksum(header);
    header[10] = std::uint8_t(sum >> 8);
    header[11] = std::uint8_t(sum);
    f.bytes(header);
  } else {
    f.be(kEtherTypeIpv6);
    f.be(std::uint32_t{0x60000000});
    f.be(std::uint16_t(l4.size()));
    f.be(s.proto);
    f.be(std::uint8_t{64});
    f.bytes(s.src_ip.bytes());
    f.bytes(s.dst_ip.bytes());
  }
  f.bytes(l4);
  return std::move(f).take();
}

inline RawPacket make_raw_packet(Bytes frame, std::size_t index = 0,
                                 std::uint32_t ts_sec = 0) {
  RawPacket p;
  p.index = index;
  p.ts_sec = ts_sec;
  p.captured_len = static_cast<std::uint32_t>(frame.size());
  p.original_len = p.captured_len;
  p.data = std::move(frame);
  return p;
}

}  // namespace pktimg
