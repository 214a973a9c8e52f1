#include <gtest/gtest.h>

#include <string>

#include "pktimg/synth.hpp"
#include "pktimg/workflow.hpp"

using namespace pktimg;

namespace {

std::string data(const std::string& name) { return std::string(PKTIMG_TEST_DATA) + "/" + name; }

std::string slurp(const std::string& path) {
  const Bytes b = read_file(path);
  return std::string(b.begin(), b.end());
}

ExtractResult extract_fixture(EncoderId enc, std::optional<std::size_t> lim = std::nullopt) {
  const MacLabelMap macs = parse_mac_map(slurp(data("extract_macs.csv")));
  return extract({open_pcap(data("extract_fixture.pcap"))}, macs, ExtractOptions{enc, lim});
}

using Counts = std::map<std::string, std::size_t>;

}  // namespace

TEST(Extract, Payload784KeepsDns) {
  const ExtractResult r = extract_fixture(EncoderId::kPayload784);
  EXPECT_EQ(r.summary.packets_read, 5u);
  EXPECT_EQ(r.summary.images_written, 4u);
  EXPECT_EQ(r.summary.skips, (Counts{{"handshake", 1}}));
  EXPECT_EQ(r.summary.per_class, (Counts{{"SmartPlug", 4}}));
  ASSERT_EQ(r.datasets.size(), 1u);
  EXPECT_EQ(r.datasets[0].labels, std::vector<std::string>{"SmartPlug"});
  EXPECT_EQ(r.datasets[0].width, 28u);
  // first data packet carries "status=on"
  const Bytes& first = r.datasets[0].records[0].pixels;
  EXPECT_EQ(std::string(first.begin(), first.begin() + 9), "status=on");
}

TEST(Extract, LotfollahiDropsDnsAndHandshake) {
  const ExtractResult r = extract_fixture(EncoderId::kLotfollahi);
  EXPECT_EQ(r.summary.images_written, 3u);
  EXPECT_EQ(r.summary.skips, (Counts{{"dns", 1}, {"handshake", 1}}));
  EXPECT_EQ(r.datasets.at(0).width, 37u);
  EXPECT_EQ(r.datasets.at(0).height, 40u);
}

TEST(Extract, LimAutoSplitsByShape) {
  const ExtractResult r = extract_fixture(EncoderId::kLim);
  std::size_t total = 0;
  for (const ImageDataset& ds : r.datasets) {
    EXPECT_TRUE(is_lim_size(ds.pixel_count()));
    EXPECT_EQ(ds.pixel_max, 15);
    total += ds.records.size();
  }
  EXPECT_EQ(total, 4u);
  EXPECT_GE(r.datasets.size(), 2u);  // 9-byte payloads -> 6x6, the DNS query is larger

  const ExtractResult fixed = extract_fixture(EncoderId::kLim, 64);
  ASSERT_EQ(fixed.datasets.size(), 1u);
  EXPECT_EQ(fixed.datasets[0].width, 8u);
}

TEST(Extract, UnknownDevicesOnly) {
  const ExtractResult r =
      extract({open_pcap(data("extract_fixture.pcap"))}, MacLabelMap{}, ExtractOptions{});
  EXPECT_EQ(r.summary.images_written, 0u);
  EXPECT_TRUE(r.datasets.empty());
  EXPECT_EQ(r.summary.skips, (Counts{{"unknown-device", 5}}));
}

TEST(Extract, CountsLawOnSyntheticCapture) {
  SynthOptions opt;
  opt.devices = 3;
  opt.packets_per_device = 60;
  const SynthCapture cap = synth_capture(opt);
  for (EncoderId e : {EncoderId::kLim, EncoderId::kLotfollahi, EncoderId::kWang,
                      EncoderId::kPayload784}) {
    const ExtractResult r = extract({cap.pcap, cap.pcap}, cap.macs, ExtractOptions{e, {}});
    const ExtractSummary& s = r.summary;
    EXPECT_EQ(s.packets_read, 2 * cap.pcap.packets.size());
    EXPECT_EQ(s.packets_read, s.images_written + s.skipped()) << to_string(e);
    std::size_t per_class = 0;
    for (const auto& [_, n] : s.per_class) per_class += n;
    EXPECT_EQ(per_class, s.images_written);
    EXPECT_GT(s.skips.at("unknown-device"), 0u);  // gateway replies
    EXPECT_EQ(s.per_class.size(), 3u);
  }
}

TEST(Extract, FingerprintEncoderRejected) {
  EXPECT_THROW(extract({}, MacLabelMap{}, ExtractOptions{EncoderId::kFingerprint, {}}),
               ContractError);
}

TEST(MacMap, ParsesAndValidates) {
  const MacLabelMap m = parse_mac_map("label,mac\nCam,00:11:22:33:44:55\n\n\"Hue, Bridge\",aa:bb:cc:dd:ee:ff\n");
  EXPECT_EQ(m.entries.size(), 2u);
  EXPECT_EQ(m.entries.at(*parse_mac("aa:bb:cc:dd:ee:ff")), "Hue, Bridge");
  EXPECT_THROW(parse_mac_map("mac\n00:11:22:33:44:55\n"), ConfigError);
  EXPECT_THROW(parse_mac_map("mac,label\nzz:11:22:33:44:55,x\n"), ConfigError);
  EXPECT_THROW(parse_mac_map("mac,label\n00:11:22:33:44:55,a\n00:11:22:33:44:55,b\n"),
               ConfigError);
  EXPECT_THROW(parse_mac_map(""), ConfigError);
}

TEST(FingerprintCsv, FourFeaturesGive2x2) {
  const FeatureTable t = parse_feature_csv("a,b,c,d,label\n0,1,2,3,x\n4,5,6,7,y\n");
  const ImageDataset ds = build_fingerprint_dataset(t);
  EXPECT_EQ(ds.records.size(), 2u);
  EXPECT_EQ(ds.width, 2u);
  EXPECT_EQ(ds.height, 2u);
  EXPECT_EQ(ds.records[0].pixels, (Bytes{0, 0, 0, 0}));
  EXPECT_EQ(ds.records[1].pixels, (Bytes{255, 255, 255, 255}));
  EXPECT_EQ(ds.labels, (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(ds.encoder, EncoderId::kFingerprint);
}

TEST(FingerprintCsv, FiveFeaturesGive3x3WithFourPads) {
  const FeatureTable t = parse_feature_csv("label,f1,f2,f3,f4,f5\nb,1,1,1,1,1\na,3,3,3,3,3\n");
  const ImageDataset ds = build_fingerprint_dataset(t);
  EXPECT_EQ(ds.width, 3u);
  EXPECT_EQ(ds.records[1].pixels, (Bytes{255, 255, 255, 255, 255, 0, 0, 0, 0}));
  EXPECT_EQ(ds.records[0].label, 1u);  // labels sorted: a, b
}

TEST(FingerprintCsv, NonNumericCellNamesLineAndColumn) {
  try {
    parse_feature_csv("a,b,label\n1,2,x\n3,oops,y\n");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'b'"), std::string::npos) << msg;
  }
}

TEST(FingerprintCsv, StructuralErrors) {
  EXPECT_THROW(parse_feature_csv("a,b\n1,2\n"), ConfigError);          // no label
  EXPECT_THROW(parse_feature_csv("a,label\n1,x,3\n"), ConfigError);    // ragged row
  EXPECT_THROW(parse_feature_csv("a,label\nnan,x\n"), ConfigError);    // not finite
  EXPECT_THROW(parse_feature_csv("a,label\n\"1,x\n"), ConfigError);    // open quote
  EXPECT_THROW(build_fingerprint_dataset(parse_feature_csv("a,label\n")), EmptyResultError);
}

TEST(Synth, DeterministicAndSeedSensitive) {
  SynthOptions a;
  a.devices = 2;
  a.packets_per_device = 30;
  const Bytes one = serialize_pcap(synth_capture(a).pcap);
  EXPECT_EQ(one, serialize_pcap(synth_capture(a).pcap));
  a.seed += 1;
  EXPECT_NE(one, serialize_pcap(synth_capture(a).pcap));

  SynthFeatureOptions f;
  f.devices = 2;
  f.rows_per_device = 5;
  EXPECT_EQ(synth_feature_csv(f), synth_feature_csv(f));
  const FeatureTable t = parse_feature_csv(synth_feature_csv(f));
  EXPECT_EQ(t.rows.size(), 10u);
  EXPECT_EQ(t.feature_names.size(), 100u);
}

TEST(Synth, MacMapCsvRoundTrips) {
  const SynthCapture cap = synth_capture(SynthOptions{4, 5, 1});
  EXPECT_EQ(parse_mac_map(mac_map_csv(cap.macs)).entries, cap.macs.entries);
}
