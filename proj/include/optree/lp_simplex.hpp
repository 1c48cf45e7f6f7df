#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "optree/milp_model.hpp"

namespace optree {

enum class LpStatus { optimal, infeasible, unbounded, time_limit };

const char* to_string(LpStatus status);

struct LpSolution {
  LpStatus status = LpStatus::infeasible;
  std::vector<double> values;  // structural variables, original space
  double objective = 0.0;
  std::size_t iterations = 0;
};

struct BoundOverride {
  double lower = 0.0;
  double upper = 0.0;
};
using BoundOverrides = std::map<std::uint32_t, BoundOverride>;

using Deadline = std::optional<std::chrono::steady_clock::time_point>;

// Bounded-variable primal simplex on a dense tableau.
//
// Every row r gets a logical variable s_r = a_r . x whose bounds encode the
// constraint sense, so the tableau always covers [A | -I] and the logical
// basis is a valid start. Phase 1 minimizes the sum of bound violations of
// the basic variables; phase 2 optimizes the objective. The basis survives
// across `solve` calls, so changing a few bounds and re-solving (as branch
// and bound does) starts from the previous optimal basis.
//
// Pricing is Dantzig's rule until `degenerate_limit` degenerate pivots have
// been taken in one call, then Bland's rule for the rest of that call.
class SimplexSolver {
 public:
  struct Options {
    double feasibility_tol = 1e-9;
    double optimality_tol = 1e-9;
    double pivot_tol = 1e-9;
    std::size_t degenerate_limit = 1000;
  };

  explicit SimplexSolver(const MilpModel& model);
  SimplexSolver(const MilpModel& model, Options options);

  // Bounds for structural variable j; integrality is ignored.
  void set_bound(std::size_t j, double lower, double upper);
  void reset_bounds();
  double lower(std::size_t j) const { return lb_[j]; }
  double upper(std::size_t j) const { return ub_[j]; }

  LpSolution solve(Deadline deadline = std::nullopt);

  std::size_t num_structural() const { return n_; }
  std::size_t num_rows() const { return m_; }
  std::size_t reinversions() const { return reinversions_; }

 private:
  enum class Phase { one, two };

  double& tab(std::size_t i, std::size_t j) { return tab_[i * cols_ + j]; }
  double tab(std::size_t i, std::size_t j) const { return tab_[i * cols_ + j]; }
  bool is_basic(std::size_t j) const { return pos_[j] >= 0; }

  void init_tableau();
  void reinvert();
  void recompute_basic_values();
  void place_nonbasic(std::size_t j);
  double tol_at(double bound) const;
  std::size_t count_infeasible() const;
  void compute_phase1_prices();
  void compute_phase2_prices();
  // Returns entering column and direction (+1 increase, -1 decrease).
  std::optional<std::pair<std::size_t, int>> choose_entering(bool bland) const;
  // Performs one iteration; returns false if the direction is unbounded.
  bool step(std::size_t q, int dir, Phase phase, bool bland, bool& degenerate);
  void pivot(std::size_t row, std::size_t col);
  double max_row_violation(std::span<const double> x) const;

  const MilpModel& model_;
  Options options_;
  std::size_t n_ = 0;     // structural columns
  std::size_t m_ = 0;     // non-empty rows kept in the tableau
  std::size_t cols_ = 0;  // n_ + m_
  std::vector<std::size_t> row_source_;  // tableau row -> model constraint
  bool empty_row_infeasible_ = false;

  std::vector<double> tab_;
  std::vector<double> lb_, ub_, x_, cost_, price_;
  std::vector<std::size_t> basis_;  // row -> variable
  std::vector<std::ptrdiff_t> pos_;  // variable -> row or -1
  std::vector<std::size_t> pivot_nz_;
  bool basics_dirty_ = true;
  std::size_t reinversions_ = 0;
  std::size_t pivots_since_reinvert_ = 0;
};

// One-shot LP relaxation solve (integrality dropped).
LpSolution solve_lp(const MilpModel& model, const BoundOverrides& overrides = {});

}  // namespace optree
