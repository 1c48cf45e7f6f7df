#include "optree/lp_simplex.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "optree/error.hpp"
#include "optree/log.hpp"

namespace optree {
namespace {

constexpr double kZeroDrop = 1e-14;
constexpr double kRowCheckTol = 1e-8;
constexpr std::size_t kReinvertEvery = 2000;

// Tolerances grow with the magnitude of the bound they guard.
double scale_at(double bound) { return std::isfinite(bound) ? std::max(1.0, std::abs(bound)) : 1.0; }

}  // namespace

const char* to_string(LpStatus status) {
  switch (status) {
    case LpStatus::optimal:
      return "optimal";
    case LpStatus::infeasible:
      return "infeasible";
    case LpStatus::unbounded:
      return "unbounded";
    case LpStatus::time_limit:
      return "time_limit";
  }
  return "unknown";
}

SimplexSolver::SimplexSolver(const MilpModel& model) : SimplexSolver(model, Options{}) {}

SimplexSolver::SimplexSolver(const MilpModel& model, Options options) : model_(model), options_(options) {
  n_ = model.num_variables();
  const auto& rows = model.constraints();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    bool empty = true;
    for (const auto& t : rows[r].terms) empty &= t.coef == 0.0;
    if (empty) {
      // 0 must satisfy the row by itself.
      const double rhs = rows[r].rhs;
      const bool ok = (rows[r].sense == Sense::leq && 0.0 <= rhs) || (rows[r].sense == Sense::geq && 0.0 >= rhs) ||
                      (rows[r].sense == Sense::eq && rhs == 0.0);
      empty_row_infeasible_ |= !ok;
      continue;
    }
    row_source_.push_back(r);
  }
  m_ = row_source_.size();
  cols_ = n_ + m_;
  lb_.assign(cols_, 0.0);
  ub_.assign(cols_, 0.0);
  x_.assign(cols_, 0.0);
  cost_.assign(cols_, 0.0);
  price_.assign(cols_, 0.0);
  for (std::size_t j = 0; j < n_; ++j) cost_[j] = model.objective()[j];
  for (std::size_t i = 0; i < m_; ++i) {
    const auto& row = rows[row_source_[i]];
    double lo = -kInf, hi = kInf;
    if (row.sense == Sense::leq || row.sense == Sense::eq) hi = row.rhs;
    if (row.sense == Sense::geq || row.sense == Sense::eq) lo = row.rhs;
    lb_[n_ + i] = lo;
    ub_[n_ + i] = hi;
  }
  reset_bounds();
  init_tableau();
}

void SimplexSolver::init_tableau() {
  tab_.assign(m_ * cols_, 0.0);
  basis_.assign(m_, 0);
  pos_.assign(cols_, -1);
  const auto& rows = model_.constraints();
  for (std::size_t i = 0; i < m_; ++i) {
    for (const auto& t : rows[row_source_[i]].terms) tab(i, t.var.index) = -t.coef;
    tab(i, n_ + i) = 1.0;
    basis_[i] = n_ + i;
    pos_[n_ + i] = static_cast<std::ptrdiff_t>(i);
  }
  for (std::size_t j = 0; j < n_; ++j) place_nonbasic(j);
  basics_dirty_ = true;
  pivots_since_reinvert_ = 0;
}

void SimplexSolver::reset_bounds() {
  for (std::size_t j = 0; j < n_; ++j) {
    const auto& v = model_.variables()[j];
    lb_[j] = v.lower;
    ub_[j] = v.upper;
    if (pos_.size() == cols_ && !is_basic(j)) place_nonbasic(j);
  }
  basics_dirty_ = true;
}

void SimplexSolver::set_bound(std::size_t j, double lower, double upper) {
  if (j >= n_) throw ModelError("bound override for unknown variable " + std::to_string(j));
  lb_[j] = lower;
  ub_[j] = upper;
  if (!is_basic(j)) place_nonbasic(j);
  basics_dirty_ = true;
}

// Nonbasic variables sit at a finite bound (the one nearest their current
// value) or at zero when free.
void SimplexSolver::place_nonbasic(std::size_t j) {
  const double lo = lb_[j], hi = ub_[j];
  if (std::isfinite(lo) && std::isfinite(hi)) {
    x_[j] = std::abs(x_[j] - hi) < std::abs(x_[j] - lo) ? hi : lo;
  } else if (std::isfinite(lo)) {
    x_[j] = lo;
  } else if (std::isfinite(hi)) {
    x_[j] = hi;
  } else {
    x_[j] = 0.0;
  }
}

void SimplexSolver::recompute_basic_values() {
  std::vector<std::size_t> active;
  for (std::size_t j = 0; j < cols_; ++j) {
    if (!is_basic(j) && x_[j] != 0.0) active.push_back(j);
  }
  for (std::size_t i = 0; i < m_; ++i) {
    const double* row = &tab_[i * cols_];
    double v = 0.0;
    for (const auto j : active) v -= row[j] * x_[j];
    x_[basis_[i]] = v;
  }
  basics_dirty_ = false;
}

// Rebuilds B^{-1}[A | -I] for the current basic set from the original rows.
void SimplexSolver::reinvert() {
  ++reinversions_;
  std::vector<std::size_t> wanted;
  std::vector<bool> keep(cols_, false);
  for (std::size_t i = 0; i < m_; ++i) {
    keep[basis_[i]] = true;
    if (basis_[i] < n_) wanted.push_back(basis_[i]);
  }
  std::sort(wanted.begin(), wanted.end());
  const std::vector<double> saved_x = x_;
  init_tableau();
  x_ = saved_x;
  for (const auto j : wanted) {
    std::ptrdiff_t best = -1;
    double best_abs = options_.pivot_tol;
    for (std::size_t i = 0; i < m_; ++i) {
      if (keep[basis_[i]]) continue;  // row already holds a wanted variable
      const double a = std::abs(tab(i, j));
      if (a > best_abs) {
        best_abs = a;
        best = static_cast<std::ptrdiff_t>(i);
      }
    }
    if (best < 0) {
      // Singular in this column: leave the variable nonbasic at a bound.
      place_nonbasic(j);
      continue;
    }
    pos_[basis_[best]] = -1;
    pivot(static_cast<std::size_t>(best), j);
  }
  for (std::size_t j = 0; j < cols_; ++j) {
    if (!is_basic(j)) place_nonbasic(j);
  }
  basics_dirty_ = true;
  pivots_since_reinvert_ = 0;
}

void SimplexSolver::pivot(std::size_t row, std::size_t col) {
  double* prow = &tab_[row * cols_];
  const double inv = 1.0 / prow[col];
  pivot_nz_.clear();
  for (std::size_t j = 0; j < cols_; ++j) {
    if (prow[j] == 0.0) continue;
    prow[j] *= inv;
    if (std::abs(prow[j]) < kZeroDrop) {
      prow[j] = 0.0;
      continue;
    }
    pivot_nz_.push_back(j);
  }
  prow[col] = 1.0;
  for (std::size_t i = 0; i < m_; ++i) {
    if (i == row) continue;
    double* r = &tab_[i * cols_];
    const double f = r[col];
    if (f == 0.0) continue;
    for (const auto j : pivot_nz_) {
      double v = r[j] - f * prow[j];
      if (std::abs(v) < kZeroDrop) v = 0.0;
      r[j] = v;
    }
    r[col] = 0.0;
  }
  const std::size_t leaving = basis_[row];
  pos_[leaving] = -1;
  basis_[row] = col;
  pos_[col] = static_cast<std::ptrdiff_t>(row);
  ++pivots_since_reinvert_;
}

double SimplexSolver::tol_at(double bound) const { return options_.feasibility_tol * scale_at(bound); }

std::size_t SimplexSolver::count_infeasible() const {
  std::size_t count = 0;
  for (std::size_t i = 0; i < m_; ++i) {
    const std::size_t b = basis_[i];
    if (x_[b] < lb_[b] - tol_at(lb_[b]) || x_[b] > ub_[b] + tol_at(ub_[b])) ++count;
  }
  return count;
}

// price_[j] = rate of change of the infeasibility sum when nonbasic j grows.
// Basic values follow x_B = -T x_N, so a basic below its lower bound
// contributes +T(i, j) and one above its upper bound -T(i, j).
void SimplexSolver::compute_phase1_prices() {
  std::fill(price_.begin(), price_.end(), 0.0);
  for (std::size_t i = 0; i < m_; ++i) {
    const std::size_t b = basis_[i];
    double c = 0.0;
    if (x_[b] < lb_[b] - tol_at(lb_[b])) c = 1.0;
    if (x_[b] > ub_[b] + tol_at(ub_[b])) c = -1.0;
    if (c == 0.0) continue;
    const double* row = &tab_[i * cols_];
    for (std::size_t j = 0; j < cols_; ++j) {
      if (row[j] != 0.0) price_[j] += c * row[j];
    }
  }
  for (std::size_t i = 0; i < m_; ++i) price_[basis_[i]] = 0.0;
}

void SimplexSolver::compute_phase2_prices() {
  for (std::size_t j = 0; j < cols_; ++j) price_[j] = cost_[j];
  for (std::size_t i = 0; i < m_; ++i) {
    const double cb = cost_[basis_[i]];
    if (cb == 0.0) continue;
    const double* row = &tab_[i * cols_];
    for (std::size_t j = 0; j < cols_; ++j) {
      if (row[j] != 0.0) price_[j] -= cb * row[j];
    }
  }
  for (std::size_t i = 0; i < m_; ++i) price_[basis_[i]] = 0.0;
}

std::optional<std::pair<std::size_t, int>> SimplexSolver::choose_entering(bool bland) const {
  const double tol = options_.optimality_tol;
  std::optional<std::pair<std::size_t, int>> best;
  double best_score = 0.0;
  for (std::size_t j = 0; j < cols_; ++j) {
    if (is_basic(j) || lb_[j] == ub_[j]) continue;
    const double d = price_[j];
    int dir = 0;
    if (d < -tol && x_[j] < ub_[j]) dir = 1;
    if (d > tol && x_[j] > lb_[j]) dir = -1;
    if (dir == 0) continue;
    if (bland) return std::make_pair(j, dir);
    if (std::abs(d) > best_score) {
      best_score = std::abs(d);
      best = std::make_pair(j, dir);
    }
  }
  return best;
}

bool SimplexSolver::step(std::size_t q, int dir, Phase phase, bool bland, bool& degenerate) {
  const double span = ub_[q] - lb_[q];

  // Breakpoint of row i: exact step and the step with the bound relaxed by
  // its feasibility tolerance.
  struct Hit {
    double exact = kInf;
    double relaxed = kInf;
    bool to_upper = false;
  };
  auto hit = [&](std::size_t i, double alpha) {
    Hit h;
    const std::size_t b = basis_[i];
    const double rate = -dir * alpha;  // change of x_b per unit step
    const double v = x_[b];
    const bool below = v < lb_[b] - tol_at(lb_[b]);
    const bool above = v > ub_[b] + tol_at(ub_[b]);
    if (phase == Phase::one && below) {
      if (rate > 0) h.exact = h.relaxed = (lb_[b] - v) / rate;  // becomes feasible at its lower bound
    } else if (phase == Phase::one && above) {
      if (rate < 0) {
        h.exact = h.relaxed = (ub_[b] - v) / rate;
        h.to_upper = true;
      }
    } else if (rate > 0 && std::isfinite(ub_[b])) {
      h.exact = (ub_[b] - v) / rate;
      h.relaxed = (ub_[b] + tol_at(ub_[b]) - v) / rate;
      h.to_upper = true;
    } else if (rate < 0 && std::isfinite(lb_[b])) {
      h.exact = (lb_[b] - v) / rate;
      h.relaxed = (lb_[b] - tol_at(lb_[b]) - v) / rate;
    }
    h.exact = std::max(h.exact, 0.0);
    h.relaxed = std::max(h.relaxed, 0.0);
    return h;
  };

  double theta_max = kInf;
  if (!bland) {
    for (std::size_t i = 0; i < m_; ++i) {
      const double alpha = tab(i, q);
      if (std::abs(alpha) <= options_.pivot_tol) continue;
      theta_max = std::min(theta_max, hit(i, alpha).relaxed);
    }
  }

  double theta = kInf;
  std::ptrdiff_t leave_row = -1;
  double leave_alpha = 0.0;
  bool leave_to_upper = false;
  for (std::size_t i = 0; i < m_; ++i) {
    const double alpha = tab(i, q);
    if (std::abs(alpha) <= options_.pivot_tol) continue;
    const Hit h = hit(i, alpha);
    if (!std::isfinite(h.exact)) continue;
    bool take = false;
    if (bland) {
      // Exact minimum ratio, ties to the lowest basic index.
      if (leave_row < 0 || h.exact < theta - 1e-12) {
        take = true;
      } else if (h.exact <= theta + 1e-12) {
        take = basis_[i] < basis_[static_cast<std::size_t>(leave_row)];
      }
    } else if (h.exact <= theta_max) {
      // Harris: largest pivot among the rows blocking within tolerance.
      take = leave_row < 0 || std::abs(alpha) > std::abs(leave_alpha);
    }
    if (take) {
      theta = h.exact;
      leave_row = static_cast<std::ptrdiff_t>(i);
      leave_alpha = alpha;
      leave_to_upper = h.to_upper;
    }
  }

  if (std::isfinite(span) && span <= theta) {
    // Bound flip of the entering variable, basis unchanged.
    degenerate = span <= 1e-12;
    const double move = dir * span;
    for (std::size_t i = 0; i < m_; ++i) {
      const double alpha = tab(i, q);
      if (alpha != 0.0) x_[basis_[i]] -= alpha * move;
    }
    x_[q] = dir > 0 ? ub_[q] : lb_[q];
    return true;
  }
  if (leave_row < 0) return false;

  degenerate = theta <= 1e-12;
  const double move = dir * theta;
  if (move != 0.0) {
    for (std::size_t i = 0; i < m_; ++i) {
      const double alpha = tab(i, q);
      if (alpha != 0.0) x_[basis_[i]] -= alpha * move;
    }
  }
  const auto row = static_cast<std::size_t>(leave_row);
  const std::size_t leaving = basis_[row];
  const double entering_value = x_[q] + move;
  x_[leaving] = leave_to_upper ? ub_[leaving] : lb_[leaving];

  pivot(row, q);
  x_[q] = entering_value;
  if (phase == Phase::two) {
    const double dq = price_[q];
    const double* prow = &tab_[row * cols_];
    for (const auto j : pivot_nz_) price_[j] -= dq * prow[j];
    price_[q] = 0.0;
  }
  return true;
}

double SimplexSolver::max_row_violation(std::span<const double> x) const {
  double worst = 0.0;
  for (std::size_t i = 0; i < m_; ++i) {
    const double a = model_.activity(model_.constraints()[row_source_[i]], x);
    const double lo = lb_[n_ + i], hi = ub_[n_ + i];
    worst = std::max({worst, (lo - a) / scale_at(lo), (a - hi) / scale_at(hi)});
  }
  for (std::size_t j = 0; j < n_; ++j) {
    worst = std::max({worst, (lb_[j] - x[j]) / scale_at(lb_[j]), (x[j] - ub_[j]) / scale_at(ub_[j])});
  }
  return worst;
}

LpSolution SimplexSolver::solve(Deadline deadline) {
  LpSolution out;
  if (empty_row_infeasible_) {
    out.status = LpStatus::infeasible;
    return out;
  }
  for (std::size_t j = 0; j < n_; ++j) {
    if (lb_[j] > ub_[j]) {
      out.status = LpStatus::infeasible;
      return out;
    }
  }
  if (pivots_since_reinvert_ >= kReinvertEvery) reinvert();
  if (basics_dirty_) recompute_basic_values();

  const std::size_t iteration_cap = 50 * (cols_ + m_) + 20000;
  std::size_t degenerate_pivots = 0;
  bool bland = false;
  std::size_t iterations = 0;
  int repairs = 0;

  auto tick = [&]() {
    ++iterations;
    if (iterations > iteration_cap) throw SolverError("simplex iteration limit exceeded");
    return deadline && (iterations % 64 == 0) && std::chrono::steady_clock::now() >= *deadline;
  };

  for (;;) {
    // Phase 1.
    while (count_infeasible() > 0) {
      compute_phase1_prices();
      const auto entering = choose_entering(bland);
      if (!entering) {
        out.status = LpStatus::infeasible;
        out.iterations = iterations;
        return out;
      }
      bool degenerate = false;
      step(entering->first, entering->second, Phase::one, bland, degenerate);
      if (degenerate && ++degenerate_pivots >= options_.degenerate_limit) bland = true;
      if (tick()) {
        out.status = LpStatus::time_limit;
        out.iterations = iterations;
        return out;
      }
    }

    // Phase 2.
    compute_phase2_prices();
    bool unbounded = false;
    for (;;) {
      const auto entering = choose_entering(bland);
      if (!entering) break;
      bool degenerate = false;
      if (!step(entering->first, entering->second, Phase::two, bland, degenerate)) {
        unbounded = true;
        break;
      }
      if (degenerate && ++degenerate_pivots >= options_.degenerate_limit) bland = true;
      if (tick()) {
        out.status = LpStatus::time_limit;
        out.iterations = iterations;
        return out;
      }
      if (count_infeasible() > 0) {
        // Numerical drift: refresh the tableau before going back to phase 1.
        if (pivots_since_reinvert_ > 0) reinvert();
        recompute_basic_values();
        break;
      }
    }
    if (unbounded) {
      out.status = LpStatus::unbounded;
      out.iterations = iterations;
      return out;
    }
    if (count_infeasible() > 0) continue;

    std::vector<double> values(x_.begin(), x_.begin() + static_cast<std::ptrdiff_t>(n_));
    const double violation = max_row_violation(values);
    if (violation > kRowCheckTol) {
      if (repairs++ < 2) {
        log::debug("simplex: row violation ", violation, " after ", iterations, " iterations, reinverting");
        reinvert();
        recompute_basic_values();
        continue;
      }
      throw SolverError("simplex lost accuracy: row violation " + std::to_string(violation));
    }
    out.status = LpStatus::optimal;
    out.values = std::move(values);
    out.objective = model_.objective_value(out.values);
    out.iterations = iterations;
    return out;
  }
}

LpSolution solve_lp(const MilpModel& model, const BoundOverrides& overrides) {
  SimplexSolver solver(model);
  for (const auto& [j, b] : overrides) solver.set_bound(j, b.lower, b.upper);
  return solver.solve();
}

}  // namespace optree
