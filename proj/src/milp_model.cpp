#include "optree/milp_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <unordered_map>

#include "optree/error.hpp"

namespace optree {
namespace {

std::vector<Term> merge_terms(std::vector<Term> terms) {
  std::vector<Term> merged;
  merged.reserve(terms.size());
  std::unordered_map<std::uint32_t, std::size_t> slot;
  for (const auto& t : terms) {
    const auto [it, fresh] = slot.try_emplace(t.var.index, merged.size());
    if (fresh) {
      merged.push_back(t);
    } else {
      merged[it->second].coef += t.coef;
    }
  }
  return merged;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

VarRef MilpModel::add_variable(VarKind kind, double lower, double upper, std::string name) {
  if (std::isnan(lower) || std::isnan(upper)) throw ModelError("variable bounds must not be NaN");
  if (lower > upper) {
    throw ModelError("inverted bounds for variable '" + name + "': " + format_number(lower) + " > " +
                     format_number(upper));
  }
  if (kind == VarKind::binary && (lower < 0.0 || upper > 1.0)) {
    throw ModelError("binary variable '" + name + "' must have bounds within [0, 1]");
  }
  if (name.empty()) name = "v" + std::to_string(variables_.size());
  variables_.push_back({kind, lower, upper, std::move(name), 0});
  objective_.push_back(0.0);
  return VarRef{static_cast<std::uint32_t>(variables_.size() - 1)};
}

void MilpModel::check_ref(VarRef v) const {
  if (v.index >= variables_.size()) {
    throw ModelError("variable reference " + std::to_string(v.index) + " out of range (" +
                     std::to_string(variables_.size()) + " variables)");
  }
}

std::size_t MilpModel::add_constraint(std::vector<Term> terms, Sense sense, double rhs, std::string name) {
  for (const auto& t : terms) {
    check_ref(t.var);
    if (!std::isfinite(t.coef)) throw ModelError("non-finite coefficient in constraint '" + name + "'");
  }
  if (!std::isfinite(rhs)) throw ModelError("non-finite right-hand side in constraint '" + name + "'");
  if (name.empty()) name = "c" + std::to_string(constraints_.size());
  constraints_.push_back({merge_terms(std::move(terms)), sense, rhs, std::move(name)});
  return constraints_.size() - 1;
}

void MilpModel::add_objective(VarRef var, double coef) {
  check_ref(var);
  if (!std::isfinite(coef)) throw ModelError("non-finite objective coefficient");
  objective_[var.index] += coef;
}

VarRef MilpModel::add_abs_bound(VarRef x, std::string name) {
  check_ref(x);
  if (name.empty()) name = "abs_" + variables_[x.index].name;
  const VarRef t = add_continuous(0.0, kInf, name);
  add_constraint({{t, 1.0}, {x, -1.0}}, Sense::geq, 0.0, name + "_pos");
  add_constraint({{t, 1.0}, {x, 1.0}}, Sense::geq, 0.0, name + "_neg");
  return t;
}

VarRef MilpModel::add_abs_objective_term(VarRef x, double weight, std::string name) {
  if (!(weight > 0.0) || !std::isfinite(weight)) throw ModelError("absolute-value weight must be positive");
  const VarRef t = add_abs_bound(x, std::move(name));
  add_objective(t, weight);
  return t;
}

std::size_t MilpModel::add_indicator_leq(std::vector<Term> terms, double rhs, VarRef guard, double big_m,
                                         std::string name) {
  check_ref(guard);
  if (variables_[guard.index].kind != VarKind::binary) throw ModelError("indicator guard must be binary");
  if (!(big_m > 0.0)) throw ModelError("big-M must be positive");
  terms.push_back({guard, big_m});
  return add_constraint(std::move(terms), Sense::leq, rhs + big_m, std::move(name));
}

std::size_t MilpModel::add_indicator_geq(std::vector<Term> terms, double rhs, VarRef guard, double big_m,
                                         std::string name) {
  check_ref(guard);
  if (variables_[guard.index].kind != VarKind::binary) throw ModelError("indicator guard must be binary");
  if (!(big_m > 0.0)) throw ModelError("big-M must be positive");
  terms.push_back({guard, -big_m});
  return add_constraint(std::move(terms), Sense::geq, rhs - big_m, std::move(name));
}

void MilpModel::set_bounds(VarRef var, double lower, double upper) {
  check_ref(var);
  auto& v = variables_[var.index];
  if (lower > upper) throw ModelError("inverted bounds for variable '" + v.name + "'");
  if (v.kind == VarKind::binary && (lower < 0.0 || upper > 1.0)) {
    throw ModelError("binary variable '" + v.name + "' must have bounds within [0, 1]");
  }
  v.lower = lower;
  v.upper = upper;
}

void MilpModel::set_branch_priority(VarRef var, int priority) {
  check_ref(var);
  variables_[var.index].branch_priority = priority;
}

std::size_t MilpModel::num_binaries() const {
  return static_cast<std::size_t>(std::count_if(variables_.begin(), variables_.end(),
                                                [](const Variable& v) { return v.kind == VarKind::binary; }));
}

double MilpModel::objective_value(std::span<const double> values) const {
  double total = 0.0;
  for (std::size_t j = 0; j < objective_.size(); ++j) {
    if (objective_[j] != 0.0) total += objective_[j] * values[j];
  }
  return total;
}

double MilpModel::activity(const LinearConstraint& row, std::span<const double> values) const {
  double total = 0.0;
  for (const auto& t : row.terms) total += t.coef * values[t.var.index];
  return total;
}

std::string sanitize_lp_name(std::string_view name) {
  std::string out;
  out.reserve(name.size() + 1);
  for (const char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
    out.push_back(ok ? c : '_');
  }
  if (out.empty() || (out[0] >= '0' && out[0] <= '9')) out.insert(out.begin(), '_');
  return out;
}

void export_lp(const MilpModel& model, std::ostream& out) {
  // Unique sanitized names.
  std::vector<std::string> vnames;
  std::set<std::string> used;
  auto unique = [&used](std::string base) {
    std::string candidate = base;
    for (int k = 1; !used.insert(candidate).second; ++k) candidate = base + "_" + std::to_string(k);
    return candidate;
  };
  for (const auto& v : model.variables()) vnames.push_back(unique(sanitize_lp_name(v.name)));

  auto write_terms = [&](const std::vector<Term>& terms) {
    bool first = true;
    for (const auto& t : terms) {
      const double a = std::abs(t.coef);
      if (first) {
        if (t.coef < 0) out << "- ";
      } else {
        out << (t.coef < 0 ? " - " : " + ");
      }
      if (a != 1.0) out << format_number(a) << ' ';
      out << vnames[t.var.index];
      first = false;
    }
    if (first) out << "0 " << (vnames.empty() ? std::string("x") : vnames.front());
  };

  out << "\\ optree MILP model\n";
  out << "Minimize\n obj: ";
  std::vector<Term> obj;
  for (std::size_t j = 0; j < model.objective().size(); ++j) {
    if (model.objective()[j] != 0.0) obj.push_back({VarRef{static_cast<std::uint32_t>(j)}, model.objective()[j]});
  }
  write_terms(obj);
  out << "\nSubject To\n";
  std::set<std::string> cused;
  for (const auto& row : model.constraints()) {
    std::string cname = sanitize_lp_name(row.name);
    for (int k = 1; !cused.insert(cname).second; ++k) cname = sanitize_lp_name(row.name) + "_" + std::to_string(k);
    out << ' ' << cname << ": ";
    write_terms(row.terms);
    switch (row.sense) {
      case Sense::leq:
        out << " <= ";
        break;
      case Sense::geq:
        out << " >= ";
        break;
      case Sense::eq:
        out << " = ";
        break;
    }
    out << format_number(row.rhs) << '\n';
  }
  out << "Bounds\n";
  auto bound_text = [](double v) {
    if (v == kInf) return std::string("+inf");
    if (v == -kInf) return std::string("-inf");
    return format_number(v);
  };
  for (std::size_t j = 0; j < model.num_variables(); ++j) {
    const auto& v = model.variables()[j];
    out << ' ' << bound_text(v.lower) << " <= " << vnames[j] << " <= " << bound_text(v.upper) << '\n';
  }
  bool any_binary = false;
  for (std::size_t j = 0; j < model.num_variables(); ++j) {
    if (model.variables()[j].kind != VarKind::binary) continue;
    if (!any_binary) out << "Binaries\n";
    any_binary = true;
    out << ' ' << vnames[j] << '\n';
  }
  out << "End\n";
}

void export_lp(const MilpModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write LP file: " + path.string());
  export_lp(model, out);
  if (!out) throw Error("failed while writing LP file: " + path.string());
}

}  // namespace optree
