#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace optree {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class VarKind { binary, continuous };
enum class Sense { leq, geq, eq };

// Dense 0-based handle to a model variable.
struct VarRef {
  std::uint32_t index = 0;
  friend auto operator<=>(const VarRef&, const VarRef&) = default;
};

struct Variable {
  VarKind kind = VarKind::continuous;
  double lower = 0.0;
  double upper = kInf;
  std::string name;
  // Branch-and-bound branches on the highest priority class first.
  int branch_priority = 0;
};

struct Term {
  VarRef var;
  double coef = 0.0;
};

struct LinearConstraint {
  std::vector<Term> terms;  // merged, first-occurrence order
  Sense sense = Sense::leq;
  double rhs = 0.0;
  std::string name;
};

// A minimization MILP. Built once by a single owner, then read-only.
class MilpModel {
 public:
  VarRef add_variable(VarKind kind, double lower, double upper, std::string name);
  VarRef add_binary(std::string name) { return add_variable(VarKind::binary, 0.0, 1.0, std::move(name)); }
  VarRef add_continuous(double lower, double upper, std::string name) {
    return add_variable(VarKind::continuous, lower, upper, std::move(name));
  }

  // Merges duplicate terms; returns the constraint id.
  std::size_t add_constraint(std::vector<Term> terms, Sense sense, double rhs, std::string name = {});

  // Adds `coef * var` to the objective (accumulating).
  void add_objective(VarRef var, double coef);

  // Creates t >= 0 with t >= x and t >= -x and adds weight * t to the
  // objective, so that t = |x| at any optimum.
  VarRef add_abs_objective_term(VarRef x, double weight, std::string name = {});
  // Same auxiliary without the objective term: t >= |x| only.
  VarRef add_abs_bound(VarRef x, std::string name = {});

  // terms . x <= rhs + big_m * (1 - guard)
  std::size_t add_indicator_leq(std::vector<Term> terms, double rhs, VarRef guard, double big_m,
                                std::string name = {});
  // terms . x >= rhs - big_m * (1 - guard)
  std::size_t add_indicator_geq(std::vector<Term> terms, double rhs, VarRef guard, double big_m,
                                std::string name = {});

  void set_bounds(VarRef var, double lower, double upper);
  void set_branch_priority(VarRef var, int priority);

  std::size_t num_variables() const { return variables_.size(); }
  std::size_t num_constraints() const { return constraints_.size(); }
  std::size_t num_binaries() const;
  const Variable& variable(VarRef v) const { return variables_.at(v.index); }
  const std::vector<Variable>& variables() const { return variables_; }
  const std::vector<LinearConstraint>& constraints() const { return constraints_; }
  const std::vector<double>& objective() const { return objective_; }

  double objective_value(std::span<const double> values) const;
  // Activity of a constraint at the given assignment.
  double activity(const LinearConstraint& row, std::span<const double> values) const;

 private:
  void check_ref(VarRef v) const;

  std::vector<Variable> variables_;
  std::vector<LinearConstraint> constraints_;
  std::vector<double> objective_;
};

// CPLEX-LP text: Minimize / Subject To / Bounds / Binaries / End.
void export_lp(const MilpModel& model, std::ostream& out);
void export_lp(const MilpModel& model, const std::filesystem::path& path);
// Maps an arbitrary name onto [A-Za-z0-9_], never starting with a digit.
std::string sanitize_lp_name(std::string_view name);

}  // namespace optree
