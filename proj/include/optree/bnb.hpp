#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "optree/milp_model.hpp"

namespace optree {

enum class SolveStatus { optimal, feasible, infeasible, no_solution_timeout };

std::string_view to_string(SolveStatus status);
std::optional<SolveStatus> parse_solve_status(std::string_view text);

// Problem-specific primal heuristic. Receives the LP relaxation values at a
// node and returns candidate full assignments; the solver validates each one
// and keeps it only if it is feasible and improves the incumbent.
using IncumbentHeuristic = std::function<std::vector<std::vector<double>>(std::span<const double> lp_values)>;

struct SolverConfig {
  double time_limit = 3600.0;  // seconds
  double relative_gap = 1e-6;
  double integrality_tol = 1e-6;
  std::optional<std::vector<double>> warm_start;
  std::optional<std::size_t> node_limit;
  std::uint64_t seed = 0;  // reserved for tie-breaking; the search is deterministic
  bool verbose = false;
  IncumbentHeuristic heuristic;
  // Heuristic runs at every node of the first `heuristic_warmup` nodes, then
  // every `heuristic_frequency` nodes.
  std::size_t heuristic_warmup = 50;
  std::size_t heuristic_frequency = 10;
};

struct SolveOutcome {
  SolveStatus status = SolveStatus::infeasible;
  std::optional<std::vector<double>> assignment;
  double objective = kInf;
  double best_bound = -kInf;
  double gap = kInf;
  std::size_t nodes = 0;
  double wall_seconds = 0.0;
  bool warm_start_used = false;
};

struct FeasibilityReport {
  bool feasible = false;
  double max_violation = 0.0;    // constraints and bounds
  double max_integrality = 0.0;  // distance of binaries from {0, 1}
};

// tol applies to both the constraint violation and the integrality deviation.
FeasibilityReport check_feasible(const MilpModel& model, std::span<const double> assignment, double tol = 1e-6);

// (incumbent - bound) / max(|incumbent|, 1e-10)
double relative_gap(double incumbent, double bound);

// Best-bound branch and bound over SimplexSolver relaxations.
//
// Until the first incumbent exists the search dives depth-first, preferring
// the child on the side the LP value rounds to; afterwards it always expands
// the open node with the lowest bound (deeper first on ties). Branching picks
// the fractional binary with the highest branch priority, then the most
// fractional one, then the lowest index.
SolveOutcome solve(const MilpModel& model, const SolverConfig& config);

}  // namespace optree
