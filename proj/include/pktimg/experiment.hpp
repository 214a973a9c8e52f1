#pragma once

// Repeated holdout experiments and the two-sided comparison report.

#include <charconv>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pktimg/cnn.hpp"
#include "pktimg/dataset.hpp"
#include "pktimg/stats.hpp"

namespace pktimg {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  std::size_t support = 0;
};

struct RunResult {
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double train_time_s = 0.0;
  double eval_time_s = 0.0;
  std::size_t test_size = 0;
  std::vector<ClassMetrics> per_class;  // indexed by class id
};

struct Evaluation {
  double accuracy = 0.0;
  double eval_time_s = 0.0;
  std::vector<std::size_t> predictions;
  std::vector<ClassMetrics> per_class;
};

inline Evaluation evaluate(const CnnModel& model, const ImageDataset& ds) {
  check_compatible(model, ds);
  if (ds.records.empty()) throw ContractError("cannot evaluate on an empty dataset");
  const auto started = std::chrono::steady_clock::now();
  Evaluation ev;
  std::vector<std::size_t> truth;
  ev.predictions.reserve(ds.records.size());
  for (const ImageRecord& r : ds.records) {
    ev.predictions.push_back(predict(model, r.pixels).class_id);
    truth.push_back(r.label);
  }
  ev.eval_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  ev.accuracy = accuracy(ev.predictions, truth);

  const std::size_t k = ds.num_classes();
  std::vector<std::size_t> tp(k), predicted(k), support(k);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++support[truth[i]];
    ++predicted[ev.predictions[i]];
    if (truth[i] == ev.predictions[i]) ++tp[truth[i]];
  }
  ev.per_class.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    ClassMetrics& m = ev.per_class[c];
    m.support = support[c];
    m.precision = predicted[c] ? double(tp[c]) / double(predicted[c]) : 0.0;
    m.recall = support[c] ? double(tp[c]) / double(support[c]) : 0.0;
  }
  return ev;
}

// Run i splits and trains with seed base_seed + i.
inline std::vector<RunResult> run_experiment(const ImageDataset& ds, const ModelConfig& cfg,
                                             std::size_t n_runs, std::uint64_t base_seed,
                                             double test_fraction) {
  if (n_runs == 0) throw ContractError("run_experiment: n_runs must be at least 1");
  std::vector<RunResult> runs;
  runs.reserve(n_runs);
  for (std::size_t i = 0; i < n_runs; ++i) {
    const std::uint64_t seed = base_seed + i;
    const Split split = split_stratified(ds, test_fraction, seed);
    ModelConfig run_cfg = config_for(ds, cfg);
    run_cfg.seed = seed;
    const TrainResult trained = train(split.train, run_cfg);
    const Evaluation ev = evaluate(trained.model, split.test);
    runs.push_back(RunResult{seed, ev.accuracy, trained.train_time_s, ev.eval_time_s,
                             split.test.records.size(), ev.per_class});
  }
  return runs;
}

inline constexpr double kSignificanceLevel = 0.05;

struct SideSummary {
  std::string name;
  std::vector<double> accuracies;
  double mean_accuracy = 0.0;
  double median_accuracy = 0.0;
  double mean_train_time_s = 0.0;
  double mean_eval_time_s = 0.0;
};

struct ComparisonReport {
  SideSummary a;
  SideSummary b;
  UTestResult utest;
  double alpha = kSignificanceLevel;
  bool significant = false;
};

inline SideSummary summarize(std::string name, const std::vector<RunResult>& runs) {
  SideSummary s;
  s.name = std::move(name);
  std::vector<double> train_t, eval_t;
  for (const RunResult& r : runs) {
    s.accuracies.push_back(r.accuracy);
    train_t.push_back(r.train_time_s);
    eval_t.push_back(r.eval_time_s);
  }
  s.mean_accuracy = mean(s.accuracies);
  s.median_accuracy = median(s.accuracies);
  s.mean_train_time_s = mean(train_t);
  s.mean_eval_time_s = mean(eval_t);
  return s;
}

inline ComparisonReport compare(const std::vector<RunResult>& a, const std::vector<RunResult>& b,
                                std::string name_a = "a", std::string name_b = "b") {
  if (a.empty() || b.empty()) throw ContractError("compare: both sides need at least one run");
  ComparisonReport rep;
  rep.a = summarize(std::move(name_a), a);
  rep.b = summarize(std::move(name_b), b);
  rep.utest = mann_whitney_u(rep.a.accuracies, rep.b.accuracies);
  rep.significant = rep.utest.p_two_sided < rep.alpha;
  return rep;
}

// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string verdict(const ComparisonReport& r) {
  return r.significant ? "significant" : "not significant";
}

// Machine-readable report, one key=value per line. Keys containing
// ".time." hold wall-clock measurements; everything else is a pure
// function of the inputs and flags.
inline std::string to_key_value(const ComparisonReport& r) {
  std::ostringstream out;
  out << "format=pktimg-compare/1\n";
  auto side = [&](const char* key, const SideSummary& s) {
    out << key << ".name=" << s.name << '\n';
    out << key << ".runs=" << s.accuracies.size() << '\n';
    out << key << ".accuracy.samples=";
    for (std::size_t i = 0; i < s.accuracies.size(); ++i) {
      out << (i ? "," : "") << format_double(s.accuracies[i]);
    }
    out << '\n';
    out << key << ".accuracy.mean=" << format_double(s.mean_accuracy) << '\n';
    out << key << ".accuracy.median=" << format_double(s.median_accuracy) << '\n';
    out << key << ".time.train_mean_s=" << format_double(s.mean_train_time_s) << '\n';
    out << key << ".time.eval_mean_s=" << format_double(s.mean_eval_time_s) << '\n';
  };
  side("a", r.a);
  side("b", r.b);
  out << "utest.u=" << format_double(r.utest.u_statistic) << '\n';
  out << "utest.p_two_sided=" << format_double(r.utest.p_two_sided) << '\n';
  out << "utest.n1=" << r.utest.n1 << '\n';
  out << "utest.n2=" << r.utest.n2 << '\n';
  out << "utest.method=" << to_string(r.utest.method) << '\n';
  out << "alpha=" << format_double(r.alpha) << '\n';
  out << "verdict=" << verdict(r) << '\n';
  return out.str();
}

inline std::map<std::string, std::string> parse_key_value(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

inline std::string to_text(const ComparisonReport& r) {
  auto fixed = [](double v, int prec) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(prec);
    s << v;
    return s.str();
  };
  auto sci = [](double v) {
    std::ostringstream s;
    s.setf(std::ios::scientific);
    s.precision(2);
    s << v;
    return s.str();
  };
  std::ostringstream out;
  out << "                     " << r.a.name << " | " << r.b.name << '\n';
  out << "Accuracy (mean)      " << fixed(r.a.mean_accuracy, 3) << " | "
      << fixed(r.b.mean_accuracy, 3) << '\n';
  out << "Accuracy (median)    " << fixed(r.a.median_accuracy, 3) << " | "
      << fixed(r.b.median_accuracy, 3) << '\n';
  out << "Train time (s, mean) " << fixed(r.a.mean_train_time_s, 3) << " | "
      << fixed(r.b.mean_train_time_s, 3) << '\n';
  out << "Eval time (s, mean)  " << fixed(r.a.mean_eval_time_s, 3) << " | "
      << fixed(r.b.mean_eval_time_s, 3) << '\n';
  out << "Mann-Whitney U       U=" << format_double(r.utest.u_statistic)
      << " p=" << sci(r.utest.p_two_sided) << " (" << to_string(r.utest.method) << ", n1="
      << r.utest.n1 << ", n2=" << r.utest.n2 << ")\n";
  out << "Verdict at alpha=" << format_double(r.alpha) << ": " << verdict(r) << '\n';
  return out.str();
}

}  // namespace pktimg
