#pragma once

// Synthetic IoT-like captures and fingerprint tables for tests and demos.
// Each device talks to a cloud endpoint with payloads that start with a
// device-specific magic prefix followed by a per-device message template
// whose variable fields are drawn from a device-specific byte distribution. Handshakes, DNS lookups and server replies (unlabeled MAC)
// are mixed in so every filter sees traffic.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "pktimg/craft.hpp"
#include "pktimg/dataset.hpp"
#include "pktimg/experiment.hpp"
#include "pktimg/pcap.hpp"
#include "pktimg/rng.hpp"

namespace pktimg {

struct SynthOptions {
  std::size_t devices = 5;
  std::size_t packets_per_device = 200;  // payload-carrying packets
  std::uint64_t seed = 7;
};

struct SynthCapture {
  PcapFile pcap;
  MacLabelMap macs;
  std::vector<std::string> device_names;
};

// Length of the fixed per-device protocol header at the start of each payload.
inline constexpr std::size_t kSynthHeaderLen = 16;

inline std::string synth_device_name(std::size_t d) { return "device-" + std::to_string(d); }

inline MacAddress synth_device_mac(std::size_t d) {
  return {0x02, 0x42, 0x00, 0x00, 0x01, static_cast<std::uint8_t>(d)};
}

// Standard DNS A query for `name`.
inline Bytes dns_query(std::uint16_t id, const std::string& name) {
  ByteWriter w;
  w.be(id);
  w.be(std::uint16_t{0x0100});  // recursion desired
  w.be(std::uint16_t{1});       // questions
  w.be(std::uint16_t{0});
  w.be(std::uint16_t{0});
  w.be(std::uint16_t{0});
  std::size_t start = 0;
  while (start <= name.size()) {
    std::size_t dot = name.find('.', start);
    if (dot == std::string::npos) dot = name.size();
    w.be(static_cast<std::uint8_t>(dot - start));
    w.bytes(std::string_view(name).substr(start, dot - start));
    start = dot + 1;
  }
  w.be(std::uint8_t{0});
  w.be(std::uint16_t{1});  // type A
  w.be(std::uint16_t{1});  // class IN
  return std::move(w).take();
}

inline SynthCapture synth_capture(const SynthOptions& opt) {
  Rng rng(opt.seed);
  SynthCapture out;
  const MacAddress gateway{0x02, 0x42, 0xff, 0xff, 0xff, 0x01};
  const IpAddress cloud = IpAddress::v4(52, 1, 2, 3);
  const IpAddress resolver = IpAddress::v4(192, 168, 1, 1);

  struct Device {
    MacAddress mac;
    IpAddress ip;
    Bytes magic;
    std::uint8_t center;  // body bytes cluster around this value
    std::uint8_t spread;
    std::uint16_t port;
    std::size_t max_len;
    Bytes body;  // message template following the header
  };
  auto draw = [&](const Device& dev) {
    const double v = rng.normal(dev.center, dev.spread);
    return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  };
  std::vector<Device> devices;
  for (std::size_t d = 0; d < opt.devices; ++d) {
    Device dev;
    dev.mac = synth_device_mac(d);
    dev.ip = IpAddress::v4(192, 168, 1, static_cast<std::uint8_t>(10 + d));
    Rng header_rng(0x5eed0000 + d);
    for (std::size_t i = 0; i < kSynthHeaderLen; ++i) {
      dev.magic.push_back(static_cast<std::uint8_t>(header_rng.below(256)));
    }
    dev.center = static_cast<std::uint8_t>(40 + 40 * (d % 5));
    dev.spread = static_cast<std::uint8_t>(12 + 6 * (d % 3));
    dev.port = static_cast<std::uint16_t>(8000 + d);
    dev.max_len = 120 + 150 * (d % 4);
    for (std::size_t i = 0; i < dev.max_len + 8; ++i) dev.body.push_back(draw(dev));
    devices.push_back(dev);
    out.macs.entries.emplace(dev.mac, synth_device_name(d));
    out.device_names.push_back(synth_device_name(d));
  }

  std::uint32_t clock = 1'600'000'000;
  auto emit = [&](const FrameSpec& spec) {
    RawPacket p = make_raw_packet(build_frame(spec), out.pcap.packets.size(), clock);
    p.ts_frac = static_cast<std::uint32_t>(rng.below(1'000'000));
    out.pcap.packets.push_back(std::move(p));
    clock += 1;
  };

  for (std::size_t round = 0; round < opt.packets_per_device; ++round) {
    for (const Device& dev : devices) {
      FrameSpec f;
      f.src_mac = dev.mac;
      f.dst_mac = gateway;
      f.src_ip = dev.ip;
      f.dst_ip = cloud;
      f.src_port = static_cast<std::uint16_t>(40000 + rng.below(20000));
      f.dst_port = dev.port;
      if (round % 50 == 0) {
        FrameSpec syn = f;
        syn.tcp_flags = tcp_flags::kSyn;
        emit(syn);
        FrameSpec dns = f;
        dns.proto = kProtoUdp;
        dns.dst_ip = resolver;
        dns.dst_port = 53;
        dns.payload = dns_query(static_cast<std::uint16_t>(rng.below(65536)),
                                "cloud" + std::to_string(&dev - devices.data()) + ".example");
        emit(dns);
      }
      const std::size_t len = kSynthHeaderLen + 8 + rng.below(dev.max_len);
      f.payload = dev.magic;
      for (std::size_t i = f.payload.size(); i < len; ++i) {
        // A quarter of the template bytes are variable fields.
        f.payload.push_back(rng.below(4) == 0 ? draw(dev) : dev.body[i - kSynthHeaderLen]);
      }
      emit(f);
      if (round % 20 == 0) {
        FrameSpec reply;
        reply.src_mac = gateway;
        reply.dst_mac = dev.mac;
        reply.src_ip = cloud;
        reply.dst_ip = dev.ip;
        reply.src_port = f.dst_port;
        reply.dst_port = f.src_port;
        reply.payload = {'O', 'K'};
        emit(reply);
      }
    }
  }
  return out;
}

struct SynthFeatureOptions {
  std::size_t devices = 5;
  std::size_t rows_per_device = 200;
  std::size_t features = 100;
  double noise = 1.0;  // per-feature stddev relative to the class-mean spacing
  std::uint64_t seed = 11;
};

// CSV with columns f0..f{n-1},label. Class means differ per feature, so the
// classes overlap more as `noise` grows.
inline std::string synth_feature_csv(const SynthFeatureOptions& opt) {
  Rng rng(opt.seed);
  std::vector<std::vector<double>> means(opt.devices, std::vector<double>(opt.features));
  for (auto& row : means) {
    for (double& m : row) m = rng.uniform() * 4.0;
  }
  std::ostringstream out;
  for (std::size_t j = 0; j < opt.features; ++j) out << 'f' << j << ',';
  out << "label\n";
  for (std::size_t r = 0; r < opt.rows_per_device; ++r) {
    for (std::size_t d = 0; d < opt.devices; ++d) {
      for (std::size_t j = 0; j < opt.features; ++j) {
        out << format_double(rng.normal(means[d][j], opt.noise)) << ',';
      }
      out << synth_device_name(d) << '\n';
    }
  }
  return out.str();
}

inline std::string mac_map_csv(const MacLabelMap& map) {
  std::string s = "mac,label\n";
  for (const auto& [mac, label] : map.entries) s += format_mac(mac) + "," + label + "\n";
  return s;
}

}  // namespace pktimg
