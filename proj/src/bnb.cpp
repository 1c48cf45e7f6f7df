#include "optree/bnb.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>

#include "optree/error.hpp"
#include "optree/log.hpp"
#include "optree/lp_simplex.hpp"

namespace optree {
namespace {

using Clock = std::chrono::steady_clock;

struct Node {
  std::ptrdiff_t parent = -1;
  std::uint32_t var = 0;
  double value = 0.0;  // fixed value of `var` at this node
  double bound = -kInf;
  std::uint32_t depth = 0;
};

// Heap ordering over node ids. `dive` pops the deepest, most recent node;
// otherwise the lowest bound, deeper and newer first on ties.
struct NodeOrder {
  const std::vector<Node>* nodes;
  bool dive;
  // std heaps pop the maximum, so return true when a should pop after b.
  bool operator()(std::size_t a, std::size_t b) const {
    const Node& na = (*nodes)[a];
    const Node& nb = (*nodes)[b];
    if (!dive && na.bound != nb.bound) return na.bound > nb.bound;
    if (na.depth != nb.depth) return na.depth < nb.depth;
    return a < b;
  }
};

// Activity-based bound propagation. Binary bounds are rounded and handed to
// the LP; continuous bounds are tightened only inside this workspace, where
// they help derive further binary fixings.
class Propagator {
 public:
  explicit Propagator(const MilpModel& model) : model_(model) {
    const auto& rows = model.constraints();
    var_rows_.resize(model.num_variables());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (const auto& t : rows[r].terms) {
        if (t.coef != 0.0) var_rows_[t.var.index].push_back(r);
      }
    }
    queued_.assign(rows.size(), false);
  }

  // Tightens lb/ub in place. `seeds` are the variables whose bounds changed
  // since the last fixed point; empty means every row. Returns false when
  // infeasibility is proven.
  bool run(std::vector<double>& lb, std::vector<double>& ub, std::span<const std::size_t> seeds) {
    const auto& rows = model_.constraints();
    std::vector<std::size_t> queue;
    if (seeds.empty()) {
      for (std::size_t r = 0; r < rows.size(); ++r) queue.push_back(r);
    } else {
      for (const auto j : seeds) enqueue_rows(j, queue);
    }
    for (const auto r : queue) queued_[r] = true;
    const std::size_t budget = 20 * rows.size() + 1000;
    bool ok = true;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const std::size_t r = queue[head];
      queued_[r] = false;
      if (head >= budget) continue;
      if (!propagate_row(rows[r], lb, ub, queue)) {
        ok = false;
        for (std::size_t k = head + 1; k < queue.size(); ++k) queued_[queue[k]] = false;
        break;
      }
    }
    return ok;
  }

 private:
  void enqueue_rows(std::size_t j, std::vector<std::size_t>& queue) {
    for (const auto r : var_rows_[j]) {
      if (!queued_[r]) {
        queued_[r] = true;
        queue.push_back(r);
      }
    }
  }

  bool tighten(std::size_t j, double lo, double hi, std::vector<double>& lb, std::vector<double>& ub,
               std::vector<std::size_t>& queue) {
    const bool binary = model_.variables()[j].kind == VarKind::binary;
    bool changed = false;
    if (binary) {
      lo = std::ceil(lo - 1e-9);
      hi = std::floor(hi + 1e-9);
      if (lo > lb[j]) {
        lb[j] = lo;
        changed = true;
      }
      if (hi < ub[j]) {
        ub[j] = hi;
        changed = true;
      }
      if (lb[j] > ub[j]) return false;
    } else {
      if (lo > lb[j] + 1e-6 * std::max(1.0, std::abs(lb[j])) || (std::isinf(lb[j]) && std::isfinite(lo))) {
        lb[j] = lo;
        changed = true;
      }
      if (hi < ub[j] - 1e-6 * std::max(1.0, std::abs(ub[j])) || (std::isinf(ub[j]) && std::isfinite(hi))) {
        ub[j] = hi;
        changed = true;
      }
      if (lb[j] > ub[j] + 1e-6 * std::max(1.0, std::abs(ub[j]))) return false;
    }
    if (changed) {
      for (const auto r : var_rows_[j]) {
        if (!queued_[r]) {
          queued_[r] = true;
          queue.push_back(r);
        }
      }
    }
    return true;
  }

  bool propagate_row(const LinearConstraint& row, std::vector<double>& lb, std::vector<double>& ub,
                     std::vector<std::size_t>& queue) {
    // Finite parts of the minimum and maximum activity plus infinite counts.
    double min_fin = 0.0, max_fin = 0.0;
    int min_inf = 0, max_inf = 0;
    for (const auto& t : row.terms) {
      const std::size_t j = t.var.index;
      const double lo = t.coef > 0 ? lb[j] : ub[j];
      const double hi = t.coef > 0 ? ub[j] : lb[j];
      if (std::isinf(lo)) {
        ++min_inf;
      } else {
        min_fin += t.coef * lo;
      }
      if (std::isinf(hi)) {
        ++max_inf;
      } else {
        max_fin += t.coef * hi;
      }
    }
    const double tol = 1e-6 * std::max(1.0, std::abs(row.rhs));
    const bool upper_side = row.sense != Sense::geq;  // activity <= rhs
    const bool lower_side = row.sense != Sense::leq;  // activity >= rhs
    if (upper_side && min_inf == 0 && min_fin > row.rhs + tol) return false;
    if (lower_side && max_inf == 0 && max_fin < row.rhs - tol) return false;

    for (const auto& t : row.terms) {
      const std::size_t j = t.var.index;
      const double a = t.coef;
      double lo = -kInf, hi = kInf;
      if (upper_side) {
        // a x_j <= rhs - (min activity of the other terms)
        const double own = a > 0 ? lb[j] : ub[j];
        const bool own_inf = std::isinf(own);
        if (min_inf == 0 || (min_inf == 1 && own_inf)) {
          const double rest = min_fin - (own_inf ? 0.0 : a * own);
          const double limit = (row.rhs - rest) / a;
          if (a > 0) {
            hi = std::min(hi, limit);
          } else {
            lo = std::max(lo, limit);
          }
        }
      }
      if (lower_side) {
        const double own = a > 0 ? ub[j] : lb[j];
        const bool own_inf = std::isinf(own);
        if (max_inf == 0 || (max_inf == 1 && own_inf)) {
          const double rest = max_fin - (own_inf ? 0.0 : a * own);
          const double limit = (row.rhs - rest) / a;
          if (a > 0) {
            lo = std::max(lo, limit);
          } else {
            hi = std::min(hi, limit);
          }
        }
      }
      if (lo == -kInf && hi == kInf) continue;
      if (!tighten(j, lo, hi, lb, ub, queue)) return false;
    }
    return true;
  }

  const MilpModel& model_;
  std::vector<std::vector<std::size_t>> var_rows_;
  std::vector<bool> queued_;
};

class BranchAndBound {
 public:
  BranchAndBound(const MilpModel& model, const SolverConfig& config)
      : model_(model), config_(config), lp_(model), propagator_(model), start_(Clock::now()) {
    deadline_ = start_ + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(config.time_limit));
    for (std::size_t j = 0; j < model.num_variables(); ++j) {
      if (model.variables()[j].kind == VarKind::binary) binaries_.push_back(j);
    }
    root_lb_.resize(model.num_variables());
    root_ub_.resize(model.num_variables());
    for (std::size_t j = 0; j < model.num_variables(); ++j) {
      root_lb_[j] = model.variables()[j].lower;
      root_ub_[j] = model.variables()[j].upper;
    }
    cur_lb_ = root_lb_;
    cur_ub_ = root_ub_;
    root_feasible_ = propagator_.run(root_lb_, root_ub_, {});
    want_lb_ = root_lb_;
    want_ub_ = root_ub_;
  }

  SolveOutcome run();

 private:
  double cutoff() const {
    if (!incumbent_) return kInf;
    return incumbent_obj_ - std::max(config_.relative_gap * std::max(std::abs(incumbent_obj_), 1e-10), 1e-9);
  }
  bool out_of_time() const { return Clock::now() >= deadline_; }
  // Returns false when propagation proves the node infeasible.
  bool apply_node_bounds(std::size_t id);
  std::optional<std::vector<double>> polish(std::span<const double> values);
  void offer(std::vector<double> candidate, bool needs_polish);
  std::optional<std::size_t> choose_branch(std::span<const double> values) const;
  double open_bound() const;
  void push(std::size_t id);
  std::size_t pop();
  void log_progress(bool force);

  const MilpModel& model_;
  const SolverConfig& config_;
  SimplexSolver lp_;
  Propagator propagator_;
  bool root_feasible_ = true;
  std::vector<std::size_t> seeds_;
  Clock::time_point start_, deadline_;
  std::vector<std::size_t> binaries_;
  std::vector<double> root_lb_, root_ub_, cur_lb_, cur_ub_, want_lb_, want_ub_;
  std::vector<Node> nodes_;
  std::vector<std::size_t> heap_;
  bool dive_ = true;
  std::optional<std::vector<double>> incumbent_;
  double incumbent_obj_ = kInf;
  std::size_t processed_ = 0;
  std::size_t last_log_ = 0;
};

bool BranchAndBound::apply_node_bounds(std::size_t id) {
  want_lb_ = root_lb_;
  want_ub_ = root_ub_;
  seeds_.clear();
  for (std::ptrdiff_t k = static_cast<std::ptrdiff_t>(id); k >= 0; k = nodes_[static_cast<std::size_t>(k)].parent) {
    const Node& node = nodes_[static_cast<std::size_t>(k)];
    if (node.parent < 0) break;  // root carries no fixing
    want_lb_[node.var] = node.value;
    want_ub_[node.var] = node.value;
    seeds_.push_back(node.var);
  }
  if (!seeds_.empty() && !propagator_.run(want_lb_, want_ub_, seeds_)) return false;
  for (const auto j : binaries_) {
    if (want_lb_[j] != cur_lb_[j] || want_ub_[j] != cur_ub_[j]) {
      lp_.set_bound(j, want_lb_[j], want_ub_[j]);
      cur_lb_[j] = want_lb_[j];
      cur_ub_[j] = want_ub_[j];
    }
  }
  return true;
}

// Fixes every binary to its rounded value and re-optimizes the continuous
// part; the result is exactly consistent with the rounded binaries.
std::optional<std::vector<double>> BranchAndBound::polish(std::span<const double> values) {
  for (const auto j : binaries_) {
    const double v = std::round(std::clamp(values[j], 0.0, 1.0));
    if (v < model_.variables()[j].lower || v > model_.variables()[j].upper) return std::nullopt;
    if (cur_lb_[j] != v || cur_ub_[j] != v) {
      lp_.set_bound(j, v, v);
      cur_lb_[j] = v;
      cur_ub_[j] = v;
    }
  }
  const auto sol = lp_.solve(deadline_);
  if (sol.status != LpStatus::optimal) return std::nullopt;
  return sol.values;
}

// `repair`: round the binaries and re-optimize the continuous part, used for
// LP points and for heuristic candidates; the repaired point must beat the
// incumbent and pass a strict feasibility check.
void BranchAndBound::offer(std::vector<double> candidate, bool repair) {
  if (candidate.size() != model_.num_variables()) return;
  if (repair) {
    auto polished = polish(candidate);
    if (!polished) return;
    candidate = std::move(*polished);
  }
  const auto report = check_feasible(model_, candidate, 1e-7);
  if (!report.feasible) return;
  const double obj = model_.objective_value(candidate);
  if (obj < incumbent_obj_) {
    incumbent_obj_ = obj;
    incumbent_ = std::move(candidate);
    if (config_.verbose) {
      log::info("bnb: incumbent ", std::setprecision(10), incumbent_obj_, " at node ", processed_);
    }
    if (dive_) {
      dive_ = false;
      std::make_heap(heap_.begin(), heap_.end(), NodeOrder{&nodes_, dive_});
    }
  }
}

std::optional<std::size_t> BranchAndBound::choose_branch(std::span<const double> values) const {
  std::optional<std::size_t> best;
  int best_priority = 0;
  double best_distance = 0.0;
  for (const auto j : binaries_) {
    const double v = values[j];
    const double frac = v - std::floor(v);
    if (frac <= config_.integrality_tol || frac >= 1.0 - config_.integrality_tol) continue;
    const int priority = model_.variables()[j].branch_priority;
    const double distance = std::abs(frac - 0.5);
    if (!best || priority > best_priority || (priority == best_priority && distance < best_distance)) {
      best = j;
      best_priority = priority;
      best_distance = distance;
    }
  }
  return best;
}

double BranchAndBound::open_bound() const {
  double bound = kInf;
  for (const auto id : heap_) bound = std::min(bound, nodes_[id].bound);
  return bound;
}

void BranchAndBound::push(std::size_t id) {
  heap_.push_back(id);
  std::push_heap(heap_.begin(), heap_.end(), NodeOrder{&nodes_, dive_});
}

std::size_t BranchAndBound::pop() {
  std::pop_heap(heap_.begin(), heap_.end(), NodeOrder{&nodes_, dive_});
  const std::size_t id = heap_.back();
  heap_.pop_back();
  return id;
}

void BranchAndBound::log_progress(bool force) {
  if (!config_.verbose) return;
  if (!force && processed_ < last_log_ + 100) return;
  last_log_ = processed_;
  const double bound = std::min(open_bound(), incumbent_obj_);
  const double elapsed = std::chrono::duration<double>(Clock::now() - start_).count();
  log::info("bnb: nodes ", processed_, " open ", heap_.size(), " incumbent ", incumbent_obj_, " bound ", bound,
            " gap ", relative_gap(incumbent_obj_, bound), " elapsed ", elapsed, "s");
}

SolveOutcome BranchAndBound::run() {
  SolveOutcome out;
  if (config_.warm_start) {
    const auto& ws = *config_.warm_start;
    if (ws.size() == model_.num_variables() && check_feasible(model_, ws, 1e-6).feasible) {
      offer(ws, true);
      out.warm_start_used = incumbent_.has_value();
    } else {
      log::debug("bnb: warm start rejected (infeasible or wrong size)");
    }
  }

  nodes_.push_back(Node{});
  push(0);
  bool timed_out = false;
  std::size_t since_heuristic = 0;

  while (!heap_.empty()) {
    if (out_of_time() || (config_.node_limit && processed_ >= *config_.node_limit)) {
      timed_out = true;
      break;
    }
    const std::size_t id = pop();
    if (nodes_[id].bound >= cutoff()) continue;
    if (!root_feasible_ || !apply_node_bounds(id)) {
      ++processed_;
      continue;
    }
    const LpSolution sol = lp_.solve(deadline_);
    if (sol.status == LpStatus::time_limit) {
      push(id);
      timed_out = true;
      break;
    }
    ++processed_;
    log_progress(false);
    if (sol.status == LpStatus::infeasible) continue;
    if (sol.status == LpStatus::unbounded) throw SolverError("LP relaxation is unbounded");
    const double obj = sol.objective;
    if (obj >= cutoff()) continue;

    const auto branch_var = choose_branch(sol.values);
    if (!branch_var) {
      offer(sol.values, true);
      continue;
    }

    const bool run_heuristic = processed_ <= config_.heuristic_warmup || ++since_heuristic >= config_.heuristic_frequency;
    if (run_heuristic) {
      since_heuristic = 0;
      if (config_.heuristic) {
        for (auto& cand : config_.heuristic(sol.values)) {
          if (cand.size() != model_.num_variables()) continue;
          if (!check_feasible(model_, cand, 1e-6).feasible) continue;
          if (model_.objective_value(cand) >= incumbent_obj_ - 1e-12) continue;
          offer(std::move(cand), true);
        }
      }
      offer(sol.values, true);  // rounding repair
      if (obj >= cutoff()) continue;
    }

    const double value = sol.values[*branch_var];
    const double preferred = value >= 0.5 ? 1.0 : 0.0;
    const auto depth = nodes_[id].depth + 1;
    const auto var = static_cast<std::uint32_t>(*branch_var);
    nodes_.push_back(Node{static_cast<std::ptrdiff_t>(id), var, 1.0 - preferred, obj, depth});
    push(nodes_.size() - 1);
    nodes_.push_back(Node{static_cast<std::ptrdiff_t>(id), var, preferred, obj, depth});
    push(nodes_.size() - 1);

    if (incumbent_ && (processed_ % 16 == 0 || heap_.size() < 64) &&
        relative_gap(incumbent_obj_, std::min(open_bound(), incumbent_obj_)) <= config_.relative_gap) {
      break;
    }
  }
  log_progress(true);

  out.nodes = processed_;
  out.wall_seconds = std::chrono::duration<double>(Clock::now() - start_).count();
  if (incumbent_) {
    out.assignment = incumbent_;
    out.objective = incumbent_obj_;
    // Open nodes that cannot beat the cutoff no longer bound the optimum.
    double bound = incumbent_obj_;
    for (const auto id : heap_) {
      if (nodes_[id].bound < cutoff()) bound = std::min(bound, nodes_[id].bound);
    }
    out.best_bound = bound;
    out.gap = relative_gap(incumbent_obj_, bound);
    out.status = out.gap <= config_.relative_gap || !timed_out ? SolveStatus::optimal : SolveStatus::feasible;
    if (out.status == SolveStatus::optimal && out.gap > config_.relative_gap) out.gap = config_.relative_gap;
  } else {
    out.status = timed_out ? SolveStatus::no_solution_timeout : SolveStatus::infeasible;
    out.best_bound = timed_out ? open_bound() : kInf;
  }
  return out;
}

}  // namespace

std::string_view to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::optimal:
      return "optimal";
    case SolveStatus::feasible:
      return "feasible";
    case SolveStatus::infeasible:
      return "infeasible";
    case SolveStatus::no_solution_timeout:
      return "no-solution-timeout";
  }
  return "unknown";
}

std::optional<SolveStatus> parse_solve_status(std::string_view text) {
  for (const auto s : {SolveStatus::optimal, SolveStatus::feasible, SolveStatus::infeasible,
                       SolveStatus::no_solution_timeout}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

double relative_gap(double incumbent, double bound) {
  if (!std::isfinite(incumbent)) return kInf;
  if (!std::isfinite(bound)) return kInf;
  return std::max(0.0, incumbent - bound) / std::max(std::abs(incumbent), 1e-10);
}

FeasibilityReport check_feasible(const MilpModel& model, std::span<const double> assignment, double tol) {
  if (assignment.size() != model.num_variables()) {
    throw ModelError("assignment has " + std::to_string(assignment.size()) + " entries, model has " +
                     std::to_string(model.num_variables()) + " variables");
  }
  FeasibilityReport report;
  for (std::size_t j = 0; j < model.num_variables(); ++j) {
    const auto& v = model.variables()[j];
    const double x = assignment[j];
    if (!std::isfinite(x)) {
      report.max_violation = kInf;
      continue;
    }
    report.max_violation = std::max({report.max_violation, v.lower - x, x - v.upper});
    if (v.kind == VarKind::binary) report.max_integrality = std::max(report.max_integrality, std::min(std::abs(x), std::abs(1.0 - x)));
  }
  for (const auto& row : model.constraints()) {
    const double a = model.activity(row, assignment);
    double viol = 0.0;
    switch (row.sense) {
      case Sense::leq:
        viol = a - row.rhs;
        break;
      case Sense::geq:
        viol = row.rhs - a;
        break;
      case Sense::eq:
        viol = std::abs(a - row.rhs);
        break;
    }
    report.max_violation = std::max(report.max_violation, viol);
  }
  report.feasible = report.max_violation <= tol && report.max_integrality <= tol;
  return report;
}

SolveOutcome solve(const MilpModel& model, const SolverConfig& config) {
  if (!(config.time_limit > 0.0)) throw ModelError("time limit must be positive");
  if (!(config.relative_gap > 0.0 && config.relative_gap < 1.0)) throw ModelError("relative gap must lie in (0, 1)");
  if (!(config.integrality_tol > 0.0 && config.integrality_tol < 1.0)) {
    throw ModelError("integrality tolerance must lie in (0, 1)");
  }
  BranchAndBound search(model, config);
  return search.run();
}

}  // namespace optree
