#pragma once

// Classic libpcap file format: 24-byte global header followed by records of
// a 16-byte header plus captured bytes. Both byte orders and the nanosecond
// magic are accepted. pcapng is not supported.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pktimg/byteio.hpp"
#include "pktimg/error.hpp"

namespace pktimg {

inline constexpr std::uint32_t kPcapMagicMicro = 0xa1b2c3d4;
inline constexpr std::uint32_t kPcapMagicNano = 0xa1b23c4d;
inline constexpr std::uint32_t kLinkTypeEthernet = 1;
inline constexpr std::size_t kPcapGlobalHeaderLen = 24;
inline constexpr std::size_t kPcapRecordHeaderLen = 16;

struct RawPacket {
  std::size_t index = 0;
  std::uint32_t ts_sec = 0;
  std::uint32_t ts_frac = 0;  // micro- or nanoseconds, see PcapFile
  std::uint32_t captured_len = 0;
  std::uint32_t original_len = 0;
  Bytes data;

  bool operator==(const RawPacket&) const = default;
};

struct PcapFile {
  std::uint32_t link_type = kLinkTypeEthernet;
  std::uint32_t snaplen = 65535;
  bool nanosecond = false;
  bool big_endian = false;
  std::vector<RawPacket> packets;
};

inline PcapFile parse_pcap(ByteView file) {
  if (file.size() < 4) throw FormatError("pcap: file shorter than magic", 0);

  PcapFile out;
  const std::uint32_t magic_le = load_le<std::uint32_t>(file, 0);
  const std::uint32_t magic_be = load_be<std::uint32_t>(file, 0);
  if (magic_le == kPcapMagicMicro || magic_le == kPcapMagicNano) {
    out.nanosecond = magic_le == kPcapMagicNano;
  } else if (magic_be == kPcapMagicMicro || magic_be == kPcapMagicNano) {
    out.big_endian = true;
    out.nanosecond = magic_be == kPcapMagicNano;
  } else {
    throw FormatError("pcap: unknown magic number", 0);
  }
  if (file.size() < kPcapGlobalHeaderLen) {
    throw FormatError("pcap: truncated global header", file.size());
  }

  auto u32 = [&](std::size_t at) {
    return out.big_endian ? load_be<std::uint32_t>(file, at)
                          : load_le<std::uint32_t>(file, at);
  };
  out.snaplen = u32(16);
  out.link_type = u32(20);

  std::size_t pos = kPcapGlobalHeaderLen;
  while (pos < file.size()) {
    const std::size_t index = out.packets.size();
    if (file.size() - pos < kPcapRecordHeaderLen) {
      throw TruncationError("pcap: truncated record header", index, pos);
    }
    RawPacket pkt;
    pkt.index = index;
    pkt.ts_sec = u32(pos);
    pkt.ts_frac = u32(pos + 4);
    pkt.captured_len = u32(pos + 8);
    pkt.original_len = u32(pos + 12);
    pos += kPcapRecordHeaderLen;
    if (file.size() - pos < pkt.captured_len) {
      throw TruncationError("pcap: truncated record body", index, pos);
    }
    pkt.data.assign(file.begin() + static_cast<std::ptrdiff_t>(pos),
                    file.begin() + static_cast<std::ptrdiff_t>(pos + pkt.captured_len));
    pos += pkt.captured_len;
    out.packets.push_back(std::move(pkt));
  }
  return out;
}

inline PcapFile open_pcap(const std::string& path) {
  return parse_pcap(read_file(path));
}

// Writes little-endian microsecond pcap unless `file` says otherwise.
// captured_len is taken from the data; original_len is written as stored.
inline Bytes serialize_pcap(const PcapFile& file) {
  ByteWriter w;
  auto u16 = [&](std::uint16_t v) { file.big_endian ? w.be(v) : w.le(v); };
  auto u32 = [&](std::uint32_t v) { file.big_endian ? w.be(v) : w.le(v); };
  u32(file.nanosecond ? kPcapMagicNano : kPcapMagicMicro);
  u16(2);
  u16(4);
  u32(0);  // thiszone
  u32(0);  // sigfigs
  u32(file.snaplen);
  u32(file.link_type);
  for (const RawPacket& p : file.packets) {
    u32(p.ts_sec);
    u32(p.ts_frac);
    u32(static_cast<std::uint32_t>(p.data.size()));
    u32(p.original_len);
    w.bytes(p.data);
  }
  return std::move(w).take();
}

inline void write_pcap(const std::string& path, const PcapFile& file) {
  write_file(path, serialize_pcap(file));
}

}  // namespace pktimg
