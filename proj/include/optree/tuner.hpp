#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "optree/bnb.hpp"
#include "optree/data.hpp"
#include "optree/formulation.hpp"
#include "optree/model_tree.hpp"

namespace optree {

struct TunerConfig {
  unsigned max_depth = 2;
  std::vector<double> c_grid{0.1, 1.0, 10.0, 100.0};
  double time_limit = 3600.0;  // per solve
  bool multivariate = false;
  std::optional<FeatureRoles> roles;  // all features when unset
  std::uint64_t seed = 0;
  bool warm_start = true;
  unsigned jobs = 1;  // (D, S) cells solved concurrently
  double relative_gap = 1e-6;

  void validate() const;
};

struct ScheduleStep {
  unsigned depth = 0;
  std::vector<unsigned> splits;
};

// (0, {0}), (1, {1}), (2, {2, 3}), ..., (n, {2^(n-1), ..., 2^n - 1}).
std::vector<ScheduleStep> schedule(unsigned max_depth);

struct TuneRecord {
  unsigned depth = 0;
  unsigned splits = 0;
  double c = 0.0;
  SolveStatus status = SolveStatus::no_solution_timeout;
  double gap = 0.0;
  double seconds = 0.0;
  // RAE (regression) or accuracy; absent without a tree or validation data.
  std::optional<double> val_score;
};

struct TuneTrace {
  Task task = Task::regression;
  std::vector<TuneRecord> records;  // schedule order, then C grid order
  std::optional<std::size_t> selected;
};

// Best validation score (lowest RAE, highest accuracy); ties go to fewer
// splits, then smaller C, then smaller D. Without validation scores the
// only admissible record is one with a tree.
std::optional<std::size_t> select_record(Task task, const std::vector<TuneRecord>& records);

// Columns D,S,C,status,gap,seconds,val_score with a trailing selected flag.
std::string trace_csv(const TuneTrace& trace);

struct TuneResult {
  ModelTree tree;
  TuneTrace trace;
};

// `train` and `val` must already be standardized with `preprocess`. The
// final tree is retrained on train followed by val. Throws NoSolutionError
// when no solve produced a tree.
TuneResult tune(const Dataset& train, const Dataset& val, const PreprocessParams& preprocess,
                const TunerConfig& config);

}  // namespace optree
