#include "optree/evaluation.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <iomanip>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "optree/error.hpp"
#include "optree/log.hpp"

namespace optree {
namespace {

template <typename T>
void check_lengths(std::span<const T> predicted, std::span<const T> actual) {
  if (predicted.size() != actual.size()) {
    throw DataError("metric inputs differ in length: " + std::to_string(predicted.size()) + " vs " +
                    std::to_string(actual.size()));
  }
  if (actual.empty()) throw DataError("metric inputs are empty");
}

// Sums of |p - y| (or squares) and of |y - mean(y)| (or squares).
std::pair<double, double> error_sums(std::span<const double> predicted, std::span<const double> actual, bool squared) {
  check_lengths(predicted, actual);
  double mean = 0.0;
  for (const double y : actual) mean += y;
  mean /= static_cast<double>(actual.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double e = predicted[i] - actual[i];
    const double s = actual[i] - mean;
    num += squared ? e * e : std::abs(e);
    den += squared ? s * s : std::abs(s);
  }
  if (!(den > 0.0)) throw DataError("relative error is undefined for constant actual values");
  return {num, den};
}

nlohmann::json metrics_to_json(const MetricsReport& m, bool include_timing) {
  nlohmann::json j;
  j["task"] = std::string(to_string(m.task));
  if (m.accuracy) j["accuracy"] = *m.accuracy;
  if (m.rae) j["rae"] = *m.rae;
  if (m.rrse) j["rrse"] = *m.rrse;
  j["leaves"] = m.leaves;
  j["solver"] = {{"status", m.provenance.status}, {"objective", m.provenance.objective}, {"gap", m.provenance.gap}};
  if (include_timing) j["seconds"] = m.seconds;
  return j;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

RunRecord run_once(const Encoded& data, const ExperimentConfig& config, std::size_t r) {
  RunRecord rec;
  rec.index = r;
  rec.seed = config.base_seed + r;
  SplitSpec spec;
  spec.seed = rec.seed;
  spec.train = 1.0 - config.validation_share;
  spec.validation = config.validation_share;
  spec.test = config.test_share;
  auto parts = split(data.data, spec);

  // Scaling is fitted on the whole training part, which the final tree sees.
  PreprocessParams pre;
  pre.schema = data.schema;
  pre.scaling = fit_standardize(parts.train.concat(parts.validation));
  const auto train = apply_standardize(parts.train, pre.scaling);
  const auto val = apply_standardize(parts.validation, pre.scaling);

  auto tuner = config.tuner;
  tuner.seed = rec.seed;
  const auto start = std::chrono::steady_clock::now();
  const auto tuned = tune(train, val, pre, tuner);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const auto& chosen = tuned.trace.records[*tuned.trace.selected];
  rec.depth = chosen.depth;
  rec.splits = chosen.splits;
  rec.c = chosen.c;
  rec.metrics = evaluate_tree(tuned.tree, parts.test);
  rec.metrics.seconds = seconds;
  rec.completed = true;
  return rec;
}

}  // namespace

double accuracy(std::span<const int> predicted, std::span<const int> actual) {
  check_lengths(predicted, actual);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < actual.size(); ++i) hits += predicted[i] == actual[i];
  return static_cast<double>(hits) / static_cast<double>(actual.size());
}

double rae(std::span<const double> predicted, std::span<const double> actual) {
  const auto [num, den] = error_sums(predicted, actual, false);
  return num / den;
}

double rrse(std::span<const double> predicted, std::span<const double> actual) {
  const auto [num, den] = error_sums(predicted, actual, true);
  return std::sqrt(num / den);
}

void RunningStats::add(double x) {
  ++n_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_);
}

double RunningStats::stddev() const { return n_ == 0 ? 0.0 : std::sqrt(std::max(0.0, m2_ / static_cast<double>(n_))); }

MetricsReport evaluate_tree(const ModelTree& tree, const Dataset& data) {
  if (data.cols != tree.num_features) {
    throw DataError("dataset has " + std::to_string(data.cols) + " encoded features, the model expects " +
                    std::to_string(tree.num_features));
  }
  if (data.task != tree.task) throw DataError("dataset task does not match the model");
  const auto scaled = apply_standardize(data, tree.preprocess.scaling);
  MetricsReport m;
  m.task = tree.task;
  m.leaves = tree.count_leaves();
  m.provenance = tree.provenance;
  m.seconds = tree.provenance.wall_seconds;
  if (is_classification(tree.task)) {
    std::vector<int> predicted;
    for (std::size_t i = 0; i < scaled.rows; ++i) predicted.push_back(tree.predict_standardized(scaled.row(i)).class_index);
    m.accuracy = accuracy(predicted, scaled.label);
  } else {
    std::vector<double> predicted;
    for (std::size_t i = 0; i < scaled.rows; ++i) predicted.push_back(tree.predict_standardized(scaled.row(i)).value);
    m.rae = rae(predicted, scaled.target);
    m.rrse = rrse(predicted, scaled.target);
  }
  return m;
}

void ExperimentConfig::validate() const {
  if (runs == 0) throw ModelError("the run count must be at least 1");
  if (!(test_share > 0.0 && test_share < 1.0)) throw ModelError("the test share must lie in (0, 1)");
  if (!(validation_share > 0.0 && validation_share < 1.0)) throw ModelError("the validation share must lie in (0, 1)");
  if (jobs == 0) throw ModelError("jobs must be at least 1");
  tuner.validate();
}

ExperimentReport run_experiment(const Encoded& data, const ExperimentConfig& config) {
  config.validate();
  ExperimentReport report;
  report.task = data.data.task;
  report.requested = config.runs;
  report.runs.resize(config.runs);

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t r = next++; r < config.runs; r = next++) {
      try {
        report.runs[r] = run_once(data, config, r);
      } catch (const std::exception& e) {
        auto& rec = report.runs[r];
        rec.index = r;
        rec.seed = config.base_seed + r;
        rec.completed = false;
        rec.error = e.what();
      }
      const auto& rec = report.runs[r];
      log::info("run ", r + 1, "/", config.runs, " (seed ", rec.seed, ")",
                rec.completed ? std::string(" done") : " failed: " + rec.error);
    }
  };
  const auto threads = std::min<std::size_t>(config.jobs, config.runs);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::vector<std::pair<std::string, RunningStats>> stats;
  if (is_classification(report.task)) {
    stats.push_back({"accuracy", {}});
  } else {
    stats.push_back({"rae", {}});
    stats.push_back({"rrse", {}});
  }
  stats.push_back({"leaves", {}});
  report.complete = true;
  for (const auto& run : report.runs) {
    if (!run.completed) {
      report.complete = false;
      continue;
    }
    for (auto& [name, s] : stats) {
      if (name == "accuracy") s.add(*run.metrics.accuracy);
      if (name == "rae") s.add(*run.metrics.rae);
      if (name == "rrse") s.add(*run.metrics.rrse);
      if (name == "leaves") s.add(static_cast<double>(run.metrics.leaves));
    }
  }
  for (const auto& [name, s] : stats) report.aggregates.push_back({name, s.mean(), s.stddev(), s.count()});
  return report;
}

std::string report_json(const ExperimentReport& report, bool include_timing) {
  nlohmann::json j;
  j["task"] = std::string(to_string(report.task));
  j["runs_requested"] = report.requested;
  j["complete"] = report.complete;
  nlohmann::json aggregates = nlohmann::json::object();
  for (const auto& a : report.aggregates) {
    aggregates[a.metric] = {{"mean", a.mean}, {"stddev", a.stddev}, {"count", a.count}};
  }
  j["aggregates"] = aggregates;
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : report.runs) {
    nlohmann::json run{{"index", r.index}, {"seed", r.seed}, {"completed", r.completed}};
    if (r.completed) {
      run["selected"] = {{"D", r.depth}, {"S", r.splits}, {"C", r.c}};
      run["metrics"] = metrics_to_json(r.metrics, include_timing);
    } else {
      run["error"] = r.error;
    }
    runs.push_back(std::move(run));
  }
  j["runs"] = runs;
  return j.dump(2) + "\n";
}

std::string report_table(const ExperimentReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(10) << "metric" << std::right << std::setw(12) << "Avg" << std::setw(12) << "StDev"
      << std::setw(8) << "runs" << '\n';
  for (const auto& a : report.aggregates) {
    const int digits = a.metric == "leaves" ? 2 : 4;
    out << std::left << std::setw(10) << a.metric << std::right << std::setw(12) << fixed(a.mean, digits)
        << std::setw(12) << fixed(a.stddev, digits) << std::setw(8) << a.count << '\n';
  }
  if (!report.complete) {
    std::size_t done = 0;
    for (const auto& r : report.runs) done += r.completed;
    out << "incomplete: " << done << " of " << report.requested << " runs finished\n";
  }
  return out.str();
}

std::string metrics_json(const MetricsReport& report) { return metrics_to_json(report, true).dump(2) + "\n"; }

std::string metrics_table(const MetricsReport& report) {
  std::ostringstream out;
  auto line = [&](const std::string& name, const std::string& value) {
    out << std::left << std::setw(10) << name << std::right << std::setw(14) << value << '\n';
  };
  if (report.accuracy) line("accuracy", fixed(*report.accuracy));
  if (report.rae) line("rae", fixed(*report.rae));
  if (report.rrse) line("rrse", fixed(*report.rrse));
  line("leaves", std::to_string(report.leaves));
  if (!report.provenance.status.empty()) line("status", report.provenance.status);
  return out.str();
}

}  // namespace optree
