#pragma once

// End-to-end stages behind the command-line tool: pcaps -> labeled images,
// feature CSV -> fingerprint images.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pktimg/csv.hpp"
#include "pktimg/dataset.hpp"
#include "pktimg/encoders.hpp"
#include "pktimg/packet.hpp"
#include "pktimg/pcap.hpp"

namespace pktimg {

inline MacLabelMap parse_mac_map(const std::string& csv_text) {
  const std::vector<CsvRow> rows = parse_csv(csv_text);
  if (rows.empty()) throw ConfigError("mac map: missing header row");
  const auto& header = rows.front().cells;
  const auto col = [&](std::string_view name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ConfigError("mac map: missing column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t mac_col = col("mac"), label_col = col("label");
  MacLabelMap map;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const CsvRow& row = rows[r];
    if (row.cells.size() != header.size()) {
      throw ConfigError("mac map line " + std::to_string(row.line) + ": expected " +
                        std::to_string(header.size()) + " columns");
    }
    const auto mac = parse_mac(row.cells[mac_col]);
    if (!mac) throw ConfigError("mac map line " + std::to_string(row.line) + ": bad MAC address");
    if (row.cells[label_col].empty()) {
      throw ConfigError("mac map line " + std::to_string(row.line) + ": empty label");
    }
    if (!map.entries.emplace(*mac, row.cells[label_col]).second) {
      throw ConfigError("mac map line " + std::to_string(row.line) + ": duplicate MAC " +
                        row.cells[mac_col]);
    }
  }
  return map;
}

struct ExtractOptions {
  EncoderId encoder = EncoderId::kPayload784;
  std::optional<std::size_t> lim_size;  // unset: per-packet nearest size
};

struct ExtractSummary {
  std::size_t packets_read = 0;
  std::size_t images_written = 0;
  std::map<std::string, std::size_t> skips;      // reason -> count
  std::map<std::string, std::size_t> per_class;  // class name -> images

  std::size_t skipped() const {
    std::size_t n = 0;
    for (const auto& [_, c] : skips) n += c;
    return n;
  }
};

struct ExtractResult {
  // One dataset per image shape, smallest first. Only lim with automatic
  // sizing produces more than one; all share the same label table.
  std::vector<ImageDataset> datasets;
  ExtractSummary summary;
};

inline ExtractResult extract(const std::vector<PcapFile>& captures, const MacLabelMap& macs,
                             const ExtractOptions& opts) {
  if (opts.encoder == EncoderId::kFingerprint) {
    throw ContractError("extract: fingerprint images come from feature CSVs");
  }
  ExtractResult out;
  ExtractSummary& sum = out.summary;
  std::vector<std::pair<PseudoImage, std::string>> images;
  auto skip = [&](SkipReason r) { ++sum.skips[std::string(to_string(r))]; };

  for (const PcapFile& cap : captures) {
    for (const RawPacket& raw : cap.packets) {
      ++sum.packets_read;
      ParseResult parsed = parse_packet(raw, cap.link_type);
      if (const Skip* s = std::get_if<Skip>(&parsed)) {
        skip(s->reason);
        continue;
      }
      const ParsedPacket& pkt = std::get<ParsedPacket>(parsed);
      LabelResult label = label_packet(pkt, macs);
      if (const Skip* s = std::get_if<Skip>(&label)) {
        skip(s->reason);
        continue;
      }
      EncodeResult enc = encode_packet(opts.encoder, pkt, opts.lim_size);
      if (const Skip* s = std::get_if<Skip>(&enc)) {
        skip(s->reason);
        continue;
      }
      images.emplace_back(std::move(std::get<PseudoImage>(enc)), std::get<std::string>(label));
    }
  }

  std::set<std::string> names;
  for (const auto& [_, name] : images) names.insert(name);
  const std::vector<std::string> labels(names.begin(), names.end());
  std::map<std::pair<std::size_t, std::size_t>, ImageDataset> by_shape;
  for (auto& [img, name] : images) {
    ImageDataset& ds = by_shape[{img.height * img.width, img.width}];
    if (ds.labels.empty()) {
      ds.encoder = img.encoder;
      ds.width = img.width;
      ds.height = img.height;
      ds.pixel_max = img.pixel_max;
      ds.labels = labels;
    }
    const auto id = static_cast<std::uint16_t>(
        std::lower_bound(labels.begin(), labels.end(), name) - labels.begin());
    ds.records.push_back(ImageRecord{std::move(img.pixels), id});
    ++sum.per_class[name];
    ++sum.images_written;
  }
  for (auto& [_, ds] : by_shape) out.datasets.push_back(std::move(ds));
  return out;
}

struct FeatureTable {
  std::vector<std::string> feature_names;
  std::vector<FeatureVector> rows;
  std::vector<std::string> labels;  // per row
};

inline FeatureTable parse_feature_csv(const std::string& csv_text) {
  const std::vector<CsvRow> rows = parse_csv(csv_text);
  if (rows.empty()) throw ConfigError("fingerprint csv: missing header row");
  const std::vector<std::string>& header = rows.front().cells;
  const auto label_it = std::find(header.begin(), header.end(), "label");
  if (label_it == header.end()) throw ConfigError("fingerprint csv: missing 'label' column");
  const auto label_col = static_cast<std::size_t>(label_it - header.begin());

  FeatureTable t;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != label_col) t.feature_names.push_back(header[c]);
  }
  if (t.feature_names.empty()) throw ConfigError("fingerprint csv: no feature columns");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const CsvRow& row = rows[r];
    if (row.cells.size() != header.size()) {
      throw ConfigError("fingerprint csv line " + std::to_string(row.line) + ": expected " +
                        std::to_string(header.size()) + " columns, got " +
                        std::to_string(row.cells.size()));
    }
    FeatureVector v;
    v.names = t.feature_names;
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == label_col) continue;
      const auto value = parse_double(row.cells[c]);
      if (!value || !std::isfinite(*value)) {
        throw ConfigError("fingerprint csv line " + std::to_string(row.line) + ", column '" +
                          header[c] + "': not a finite number: '" + row.cells[c] + "'");
      }
      v.values.push_back(*value);
    }
    if (row.cells[label_col].empty()) {
      throw ConfigError("fingerprint csv line " + std::to_string(row.line) + ": empty label");
    }
    t.rows.push_back(std::move(v));
    t.labels.push_back(row.cells[label_col]);
  }
  return t;
}

// Calibrates min/max over the whole table, then encodes every row.
inline ImageDataset build_fingerprint_dataset(const FeatureTable& table) {
  if (table.rows.empty()) throw EmptyResultError("fingerprint csv has no data rows");
  const Calibration calib = calibrate(table.rows);
  const std::set<std::string> names(table.labels.begin(), table.labels.end());
  ImageDataset ds;
  ds.encoder = EncoderId::kFingerprint;
  ds.pixel_max = 255;
  ds.labels.assign(names.begin(), names.end());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    PseudoImage img = encode_fingerprint(table.rows[i], calib);
    ds.width = img.width;
    ds.height = img.height;
    const auto id = static_cast<std::uint16_t>(
        std::lower_bound(ds.labels.begin(), ds.labels.end(), table.labels[i]) -
        ds.labels.begin());
    ds.records.push_back(ImageRecord{std::move(img.pixels), id});
  }
  return ds;
}

}  // namespace pktimg
