#include "optree/tuner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include "optree/error.hpp"
#include "optree/evaluation.hpp"
#include "optree/log.hpp"

namespace optree {
namespace {

struct Cell {
  unsigned depth = 0;
  unsigned splits = 0;
  std::vector<TuneRecord> records;
  std::vector<std::optional<ModelTree>> trees;
};

double validation_score(const ModelTree& tree, const Dataset& val) {
  if (is_classification(val.task)) {
    std::vector<int> predicted;
    predicted.reserve(val.rows);
    for (std::size_t i = 0; i < val.rows; ++i) predicted.push_back(tree.predict_standardized(val.row(i)).class_index);
    return accuracy(predicted, val.label);
  }
  std::vector<double> predicted;
  predicted.reserve(val.rows);
  for (std::size_t i = 0; i < val.rows; ++i) predicted.push_back(tree.predict_standardized(val.row(i)).value);
  const bool flat = std::all_of(val.target.begin(), val.target.end(), [&](double y) { return y == val.target[0]; });
  if (!flat) return rae(predicted, val.target);
  // RAE is undefined here; the absolute error ranks candidates identically.
  double total = 0.0;
  for (std::size_t i = 0; i < val.rows; ++i) total += std::abs(predicted[i] - val.target[i]);
  return total / static_cast<double>(val.rows);
}

FormulationSpec spec_for(const Dataset& train, const TunerConfig& config, unsigned depth, unsigned splits, double c) {
  FormulationSpec spec;
  spec.depth = depth;
  spec.max_splits = splits;
  spec.c = c;
  spec.multivariate = config.multivariate;
  spec.roles = config.roles ? *config.roles : default_roles(train);
  return spec;
}

void run_cell(Cell& cell, const Dataset& train, const Dataset& val, const PreprocessParams& preprocess,
              const TunerConfig& config) {
  std::optional<std::vector<double>> previous;
  for (const double c : config.c_grid) {
    TrainOptions options;
    options.spec = spec_for(train, config, cell.depth, cell.splits, c);
    options.time_limit = config.time_limit;
    options.relative_gap = config.relative_gap;
    if (config.warm_start) options.warm_start = previous;
    const auto result = train_tree(train, preprocess, options);

    TuneRecord rec;
    rec.depth = cell.depth;
    rec.splits = cell.splits;
    rec.c = c;
    rec.status = result.outcome.status;
    rec.gap = result.outcome.gap;
    rec.seconds = result.outcome.wall_seconds;
    if (result.tree && !val.empty()) rec.val_score = validation_score(*result.tree, val);
    log::info("tune D=", cell.depth, " S=", cell.splits, " C=", c, ": ", to_string(rec.status), ", gap ", rec.gap,
              ", ", rec.seconds, " s",
              rec.val_score ? ", validation " + std::to_string(*rec.val_score) : std::string());
    previous = result.outcome.assignment;
    cell.records.push_back(rec);
    cell.trees.push_back(result.tree);
  }
}

bool has_tree(const TuneRecord& r) {
  return r.status == SolveStatus::optimal || r.status == SolveStatus::feasible;
}

}  // namespace

void TunerConfig::validate() const {
  if (max_depth > TreeTopology::kMaxDepth) {
    throw ModelError("max depth " + std::to_string(max_depth) + " exceeds " + std::to_string(TreeTopology::kMaxDepth));
  }
  if (c_grid.empty()) throw ModelError("the C grid must not be empty");
  for (const double c : c_grid) {
    if (!(c > 0.0) || !std::isfinite(c)) throw ModelError("C values must be positive and finite");
  }
  if (!(time_limit > 0.0)) throw ModelError("the time limit must be positive");
  if (jobs == 0) throw ModelError("jobs must be at least 1");
}

std::vector<ScheduleStep> schedule(unsigned max_depth) {
  std::vector<ScheduleStep> out{{0, {0}}};
  for (unsigned d = 1; d <= max_depth; ++d) {
    ScheduleStep step{d, {}};
    for (unsigned s = 1u << (d - 1); s < (1u << d); ++s) step.splits.push_back(s);
    out.push_back(std::move(step));
  }
  return out;
}

std::optional<std::size_t> select_record(Task task, const std::vector<TuneRecord>& records) {
  const bool higher_better = is_classification(task);
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!has_tree(r)) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = records[*best];
    if (r.val_score.has_value() != b.val_score.has_value()) {
      if (r.val_score) best = i;
      continue;
    }
    if (r.val_score && *r.val_score != *b.val_score) {
      if ((*r.val_score > *b.val_score) == higher_better) best = i;
      continue;
    }
    if (std::tie(r.splits, r.c, r.depth) < std::tie(b.splits, b.c, b.depth)) best = i;
  }
  return best;
}

std::string trace_csv(const TuneTrace& trace) {
  std::ostringstream out;
  out << "D,S,C,status,gap,seconds,val_score,selected\n";
  char buf[64];
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    const auto& r = trace.records[i];
    out << r.depth << ',' << r.splits << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.c);
    out << buf << ',' << to_string(r.status) << ',';
    if (std::isfinite(r.gap)) {
      std::snprintf(buf, sizeof buf, "%.17g", r.gap);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "%.3f", r.seconds);
    out << ',' << buf << ',';
    if (r.val_score) {
      std::snprintf(buf, sizeof buf, "%.17g", *r.val_score);
      out << buf;
    }
    out << ',' << (trace.selected == i ? 1 : 0) << '\n';
  }
  return out.str();
}

TuneResult tune(const Dataset& train, const Dataset& val, const PreprocessParams& preprocess,
                const TunerConfig& config) {
  config.validate();
  const auto plan = schedule(config.max_depth);
  if (val.empty() && (plan.size() > 1 || config.c_grid.size() > 1)) {
    throw DataError("tuning over more than one configuration needs a non-empty validation set");
  }
  if (!val.empty() && (val.task != train.task || val.cols != train.cols || val.classes != train.classes)) {
    throw DataError("training and validation sets do not share a schema");
  }

  std::vector<Cell> cells;
  for (const auto& step : plan) {
    for (const auto s : step.splits) cells.push_back({step.depth, s, {}, {}});
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(cells.size());
  auto worker = [&]() {
    for (std::size_t k = next++; k < cells.size(); k = next++) {
      try {
        run_cell(cells[k], train, val, preprocess, config);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const unsigned threads = std::min<std::size_t>(config.jobs, cells.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  TuneResult result;
  result.trace.task = train.task;
  std::vector<const std::optional<ModelTree>*> trees;
  for (const auto& cell : cells) {
    for (std::size_t k = 0; k < cell.records.size(); ++k) {
      result.trace.records.push_back(cell.records[k]);
      trees.push_back(&cell.trees[k]);
    }
  }
  result.trace.selected = select_record(train.task, result.trace.records);
  if (!result.trace.selected) throw NoSolutionError("no tuning solve produced a tree\n" + trace_csv(result.trace));
  const auto& chosen = result.trace.records[*result.trace.selected];
  const ModelTree& chosen_tree = **trees[*result.trace.selected];
  log::info("selected D=", chosen.depth, " S=", chosen.splits, " C=", chosen.c);

  const Dataset merged = val.empty() ? train : train.concat(val);
  TrainOptions options;
  options.spec = spec_for(train, config, chosen.depth, chosen.splits, chosen.c);
  options.time_limit = config.time_limit;
  options.relative_gap = config.relative_gap;
  options.warm_tree = &chosen_tree;
  auto final_fit = train_tree(merged, preprocess, options);
  if (final_fit.tree) {
    result.tree = std::move(*final_fit.tree);
  } else {
    log::info("final retrain found no tree; keeping the tuning tree");
    result.tree = chosen_tree;
  }
  return result;
}

}  // namespace optree
