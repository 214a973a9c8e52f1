// pktimg: packet captures -> pseudo-images -> CNN device identification.
//
// Exit codes: 0 success, 1 unexpected failure, 2 usage error,
// 3 input format error, 4 empty result.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pktimg/pktimg.hpp"

namespace fs = std::filesystem;
using namespace pktimg;

namespace {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kFormat = 3,
  kEmpty = 4,
};

struct Hyper {
  std::uint64_t seed = 1;
  std::size_t epochs = 20;
  std::size_t batch = 32;
  double lr = 0.05;
};

void add_seed(CLI::App* cmd, Hyper& h) {
  cmd->add_option("--seed", h.seed, "Seed for every random choice")
      ->envname("PKTIMG_SEED")
      ->capture_default_str();
}

void add_hyper(CLI::App* cmd, Hyper& h) {
  add_seed(cmd, h);
  cmd->add_option("--epochs", h.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--batch", h.batch, "Mini-batch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--lr", h.lr, "SGD learning rate")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
}

ModelConfig model_config(const Hyper& h) {
  ModelConfig cfg;
  cfg.seed = h.seed;
  cfg.epochs = h.epochs;
  cfg.batch_size = h.batch;
  cfg.learning_rate = h.lr;
  return cfg;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path);
  out << text;
}

// "out.pimg" + 16x16 -> "out.16x16.pimg"
std::string shape_suffixed(const std::string& path, std::size_t w, std::size_t h) {
  fs::path p(path);
  const std::string tag = "." + std::to_string(w) + "x" + std::to_string(h);
  return (p.parent_path() / (p.stem().string() + tag + p.extension().string())).string();
}

void print_counts(const char* title, const std::map<std::string, std::size_t>& counts) {
  std::cout << title << ":";
  if (counts.empty()) std::cout << " none";
  std::cout << '\n';
  for (const auto& [k, v] : counts) std::cout << "  " << k << ": " << v << '\n';
}

// ---------------------------------------------------------------------------

struct ExtractArgs {
  std::vector<std::string> pcaps;
  std::string encoder;
  std::string mac_map;
  std::string out;
  std::string lim_size = "auto";
};

int run_extract(const ExtractArgs& a) {
  ExtractOptions opts;
  const auto enc = parse_encoder(a.encoder);
  if (!enc || *enc == EncoderId::kFingerprint) {
    std::cerr << "error: unknown encoder '" << a.encoder
              << "' (expected lim, lotfollahi, wang or payload784)\n";
    return kUsage;
  }
  opts.encoder = *enc;
  if (a.lim_size != "auto") {
    if (opts.encoder != EncoderId::kLim) {
      std::cerr << "error: --lim-size only applies to the lim encoder\n";
      return kUsage;
    }
    opts.lim_size = std::stoul(a.lim_size);
  }
  const MacLabelMap macs = parse_mac_map(read_text(a.mac_map));
  std::vector<PcapFile> caps;
  for (const std::string& path : a.pcaps) caps.push_back(open_pcap(path));

  const ExtractResult res = extract(caps, macs, opts);
  const ExtractSummary& s = res.summary;
  std::cout << "packets read: " << s.packets_read << '\n';
  std::cout << "images written: " << s.images_written << '\n';
  std::cout << "skipped: " << s.skipped() << '\n';
  print_counts("skips by reason", s.skips);
  print_counts("images per class", s.per_class);
  if (s.images_written == 0) {
    std::cerr << "error: 0 images produced\n";
    return kEmpty;
  }
  const bool split_by_shape = opts.encoder == EncoderId::kLim && !opts.lim_size;
  for (const ImageDataset& ds : res.datasets) {
    const std::string path =
        split_by_shape ? shape_suffixed(a.out, ds.width, ds.height) : a.out;
    write_dataset(ds, path);
    std::cout << "wrote " << path << " (" << ds.records.size() << " images, " << ds.width
              << "x" << ds.height << ")\n";
  }
  return kOk;
}

struct FingerprintArgs {
  std::string csv;
  std::string out;
};

int run_fingerprint(const FingerprintArgs& a) {
  const ImageDataset ds = build_fingerprint_dataset(parse_feature_csv(read_text(a.csv)));
  write_dataset(ds, a.out);
  std::cout << "wrote " << a.out << " (" << ds.records.size() << " images, " << ds.width << "x"
            << ds.height << ", " << ds.num_classes() << " classes)\n";
  return kOk;
}

struct TrainArgs {
  std::string dataset;
  std::string out;
  double test_fraction = 0.0;
  Hyper hyper;
};

int run_train(const TrainArgs& a) {
  const ImageDataset ds = read_dataset(a.dataset);
  ImageDataset train_set = ds;
  std::optional<ImageDataset> held_out;
  if (a.test_fraction > 0.0) {
    Split split = split_stratified(ds, a.test_fraction, a.hyper.seed);
    train_set = std::move(split.train);
    held_out = std::move(split.test);
  }
  const ModelConfig cfg = config_for(ds, model_config(a.hyper));
  const TrainResult res = train(train_set, cfg);

  std::ostringstream hist;
  hist << "epoch,mean_loss,train_accuracy\n";
  for (const EpochStats& e : res.history) {
    hist << e.epoch << ',' << format_double(e.mean_loss) << ',' << format_double(e.accuracy)
         << '\n';
    std::cout << "epoch " << e.epoch << "  loss " << e.mean_loss << "  train acc " << e.accuracy
              << '\n';
  }
  save_model(res.model, a.out);
  write_text(a.out + ".history.csv", hist.str());
  std::cout << "train time (s): " << res.train_time_s << '\n';
  if (held_out) {
    const Evaluation ev = evaluate(res.model, *held_out);
    std::cout << "held-out accuracy: " << format_double(ev.accuracy) << " ("
              << held_out->records.size() << " images)\n";
  }
  std::cout << "wrote " << a.out << " and " << a.out << ".history.csv\n";
  return kOk;
}

struct EvalArgs {
  std::string dataset;
  std::string model;
};

int run_eval(const EvalArgs& a) {
  const ImageDataset ds = read_dataset(a.dataset);
  const CnnModel model = load_model(a.model);
  const Evaluation ev = evaluate(model, ds);
  std::cout << "accuracy: " << format_double(ev.accuracy) << '\n';
  std::cout << "eval time (s): " << ev.eval_time_s << '\n';
  std::cout << "class,precision,recall,support\n";
  for (std::size_t c = 0; c < ev.per_class.size(); ++c) {
    const ClassMetrics& m = ev.per_class[c];
    std::cout << ds.labels[c] << ',' << format_double(m.precision) << ','
              << format_double(m.recall) << ',' << m.support << '\n';
  }
  return kOk;
}

struct CompareArgs {
  std::string dataset_a;
  std::string dataset_b;
  std::string out;
  std::size_t runs = 10;
  double test_fraction = 0.2;
  Hyper hyper;
};

int run_compare(const CompareArgs& a) {
  const ImageDataset da = read_dataset(a.dataset_a);
  const ImageDataset db = read_dataset(a.dataset_b);
  const std::set<std::string> la(da.labels.begin(), da.labels.end());
  const std::set<std::string> lb(db.labels.begin(), db.labels.end());
  if (la != lb) {
    std::cerr << "error: datasets have different class sets; comparison needs one label space\n";
    return kUsage;
  }
  const ModelConfig cfg = model_config(a.hyper);
  const auto runs_a = run_experiment(da, cfg, a.runs, a.hyper.seed, a.test_fraction);
  const auto runs_b = run_experiment(db, cfg, a.runs, a.hyper.seed, a.test_fraction);
  const ComparisonReport rep = compare(runs_a, runs_b, std::string(to_string(da.encoder)),
                                       std::string(to_string(db.encoder)));
  std::cout << to_text(rep);
  if (!a.out.empty()) {
    write_text(a.out, to_key_value(rep));
    std::cout << "wrote " << a.out << '\n';
  }
  return kOk;
}

struct InspectArgs {
  std::string dataset;
  std::size_t index = 0;
  std::string out;
};

int run_inspect(const InspectArgs& a) {
  const ImageDataset ds = read_dataset(a.dataset);
  if (a.index >= ds.records.size()) {
    std::cerr << "error: index " << a.index << " out of range (dataset has "
              << ds.records.size() << " records)\n";
    return kUsage;
  }
  const PseudoImage img = ds.image(a.index);
  if (!a.out.empty()) write_file(a.out, render_pgm(img));
  std::cout << "record " << a.index << ": class " << ds.labels[img.label.value_or(0)] << ", "
            << img.width << "x" << img.height << ", encoder " << to_string(img.encoder)
            << '\n';
  static constexpr std::string_view kShades = " .:-=+*#%@";
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      const std::size_t px = img.pixels[r * img.width + c];
      std::cout << kShades[px * (kShades.size() - 1) / img.pixel_max];
    }
    std::cout << '\n';
  }
  if (!a.out.empty()) std::cout << "wrote " << a.out << '\n';
  return kOk;
}

struct SynthArgs {
  std::string out_dir;
  SynthOptions capture;
  SynthFeatureOptions features;
};

int run_synth(const SynthArgs& a) {
  fs::create_directories(a.out_dir);
  const SynthCapture cap = synth_capture(a.capture);
  const fs::path dir(a.out_dir);
  write_pcap((dir / "capture.pcap").string(), cap.pcap);
  write_text((dir / "macs.csv").string(), mac_map_csv(cap.macs));
  SynthFeatureOptions f = a.features;
  f.devices = a.capture.devices;
  write_text((dir / "fingerprint.csv").string(), synth_feature_csv(f));
  std::cout << "wrote " << (dir / "capture.pcap").string() << " (" << cap.pcap.packets.size()
            << " packets), macs.csv, fingerprint.csv\n";
  return kOk;
}

// Reads "key = value" lines and splices them in as "--key value" right after
// the subcommand, so flags given on the command line still win.
std::vector<std::string> apply_config_file(std::vector<std::string> args, CLI::App& app) {
  std::optional<std::string> config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                 args.begin() + static_cast<std::ptrdiff_t>(i + 2));
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (!config_path) return args;

  std::size_t sub_at = args.size();
  CLI::App* sub = nullptr;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if ((sub = app.get_subcommand_no_throw(args[i])) != nullptr) {
      sub_at = i;
      break;
    }
  }
  if (!sub) throw CLI::ValidationError("--config", "needs a subcommand");

  std::vector<std::string> injected;
  std::istringstream in(read_text(*config_path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    std::string key = CLI::detail::trim_copy(line.substr(0, eq));
    if (key.empty()) continue;
    if (eq == std::string::npos) {
      throw CLI::ValidationError("--config", "line " + std::to_string(line_no) +
                                                 ": expected key=value");
    }
    const std::string value = CLI::detail::trim_copy(line.substr(eq + 1));
    if (sub->get_option_no_throw("--" + key) != nullptr) {
      injected.push_back("--" + key);
      injected.push_back(value);
      continue;
    }
    bool known = false;
    for (const CLI::App* other : app.get_subcommands({})) {
      known = known || other->get_option_no_throw("--" + key) != nullptr;
    }
    if (!known) {
      throw CLI::ValidationError("--config", "line " + std::to_string(line_no) +
                                                 ": unknown key '" + key + "'");
    }
  }
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_at + 1), injected.begin(),
              injected.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Packet captures to pseudo-images and CNN device identification"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", "pktimg 0.1.0");
  std::string config_unused;
  app.add_option("--config", config_unused,
                 "key=value file; keys are long flag names, command-line flags override");

  ExtractArgs ex;
  CLI::App* extract_cmd = app.add_subcommand("extract", "Encode pcap packets into a dataset");
  extract_cmd->add_option("pcaps", ex.pcaps, "Input pcap files")->required()->check(CLI::ExistingFile);
  extract_cmd->add_option("--encoder", ex.encoder, "lim | lotfollahi | wang | payload784")->required();
  extract_cmd->add_option("--mac-map", ex.mac_map, "CSV with columns mac,label")
      ->required()
      ->check(CLI::ExistingFile);
  extract_cmd->add_option("--out", ex.out, "Output dataset path")->required();
  extract_cmd->add_option("--lim-size", ex.lim_size, "auto | 36 | 64 | 256 | 1024")
      ->check(CLI::IsMember({"auto", "36", "64", "256", "1024"}))
      ->capture_default_str();

  FingerprintArgs fp;
  CLI::App* fp_cmd = app.add_subcommand("fingerprint", "Encode a feature CSV into a dataset");
  fp_cmd->add_option("csv", fp.csv, "Feature CSV with a label column")
      ->required()
      ->check(CLI::ExistingFile);
  fp_cmd->add_option("--out", fp.out, "Output dataset path")->required();

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "Train the CNN on a dataset");
  train_cmd->add_option("dataset", tr.dataset)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", tr.out, "Model checkpoint path")->required();
  train_cmd->add_option("--test-fraction", tr.test_fraction,
                        "Hold out this stratified fraction and report its accuracy (0 = none)")
      ->check(CLI::Range(0.0, 0.99))
      ->capture_default_str();
  add_hyper(train_cmd, tr.hyper);

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("dataset", ev.dataset)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("model", ev.model)->required()->check(CLI::ExistingFile);

  CompareArgs cmp;
  CLI::App* compare_cmd = app.add_subcommand(
      "compare", "Repeated holdout on two datasets plus a Mann-Whitney U test");
  compare_cmd->add_option("dataset_a", cmp.dataset_a)->required()->check(CLI::ExistingFile);
  compare_cmd->add_option("dataset_b", cmp.dataset_b)->required()->check(CLI::ExistingFile);
  compare_cmd->add_option("--out", cmp.out, "Write the key=value report here");
  compare_cmd->add_option("--runs", cmp.runs, "Runs per dataset")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  compare_cmd->add_option("--test-fraction", cmp.test_fraction)
      ->check(CLI::Range(0.01, 0.99))
      ->capture_default_str();
  add_hyper(compare_cmd, cmp.hyper);

  InspectArgs ins;
  CLI::App* inspect_cmd = app.add_subcommand("inspect", "Export one record as PGM and preview it");
  inspect_cmd->add_option("dataset", ins.dataset)->required()->check(CLI::ExistingFile);
  inspect_cmd->add_option("--index", ins.index)->capture_default_str();
  inspect_cmd->add_option("--out", ins.out, "PGM output path");

  SynthArgs syn;
  CLI::App* synth_cmd =
      app.add_subcommand("synth", "Write a synthetic capture, MAC map and feature CSV");
  synth_cmd->add_option("--out-dir", syn.out_dir)->required();
  synth_cmd->add_option("--devices", syn.capture.devices)
      ->check(CLI::Range(2, 200))
      ->capture_default_str();
  synth_cmd->add_option("--packets", syn.capture.packets_per_device, "Payload packets per device")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth_cmd->add_option("--rows", syn.features.rows_per_device, "Feature rows per device")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth_cmd->add_option("--features", syn.features.features)
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth_cmd->add_option("--noise", syn.features.noise)->capture_default_str();
  synth_cmd->add_option("--seed", syn.capture.seed)->envname("PKTIMG_SEED")->capture_default_str();

  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

  std::vector<std::string> args(argv, argv + argc);
  try {
    args = apply_config_file(std::move(args), app);
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFormat;
  }
  syn.features.seed = syn.capture.seed + 1;

  try {
    if (*extract_cmd) return run_extract(ex);
    if (*fp_cmd) return run_fingerprint(fp);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev);
    if (*compare_cmd) return run_compare(cmp);
    if (*inspect_cmd) return run_inspect(ins);
    if (*synth_cmd) return run_synth(syn);
  } catch (const EmptyResultError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kEmpty;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFormat;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFormat;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}
