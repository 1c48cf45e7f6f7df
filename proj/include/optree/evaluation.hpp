#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "optree/data.hpp"
#include "optree/model_tree.hpp"
#include "optree/tuner.hpp"

namespace optree {

double accuracy(std::span<const int> predicted, std::span<const int> actual);
// Normalized by the mean of `actual` itself.
double rae(std::span<const double> predicted, std::span<const double> actual);
double rrse(std::span<const double> predicted, std::span<const double> actual);

// Welford accumulator; stddev is the population formula.
class RunningStats {
 public:
  void add(double x);
  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double stddev() const;

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct MetricsReport {
  Task task = Task::regression;
  std::optional<double> accuracy;
  std::optional<double> rae;
  std::optional<double> rrse;
  std::size_t leaves = 0;
  Provenance provenance;
  double seconds = 0.0;  // wall time to obtain the tree
};

// `data` is encoded but unscaled; the tree's own standardization is applied.
MetricsReport evaluate_tree(const ModelTree& tree, const Dataset& data);

struct ExperimentConfig {
  std::size_t runs = 30;
  std::uint64_t base_seed = 0;
  double test_share = 0.2;        // of the whole data
  double validation_share = 0.2;  // of the remaining training part
  TunerConfig tuner;
  unsigned jobs = 1;  // runs executed concurrently

  void validate() const;
};

struct RunRecord {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool completed = false;
  std::string error;
  MetricsReport metrics;
  unsigned depth = 0;
  unsigned splits = 0;
  double c = 0.0;
};

struct Aggregate {
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;
};

struct ExperimentReport {
  Task task = Task::regression;
  std::size_t requested = 0;
  std::vector<RunRecord> runs;  // by run index
  std::vector<Aggregate> aggregates;
  bool complete = false;  // every run finished
};

// Run r uses seed base_seed + r for an outer test split and an inner
// validation split, standardizes on the training part, tunes, retrains and
// scores on the test part.
ExperimentReport run_experiment(const Encoded& data, const ExperimentConfig& config);

// Timing fields vary between otherwise identical runs; leave them out for a
// reproducible document.
std::string report_json(const ExperimentReport& report, bool include_timing = true);
std::string report_table(const ExperimentReport& report);

std::string metrics_json(const MetricsReport& report);
std::string metrics_table(const MetricsReport& report);

}  // namespace optree
