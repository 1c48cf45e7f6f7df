#include "optree/formulation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <string>

#include "optree/error.hpp"
#include "optree/lp_simplex.hpp"
#include "optree/log.hpp"

namespace optree {
namespace {

constexpr int kPriorityD = 3;
constexpr int kPriorityA = 2;
constexpr int kPriorityL = 1;
constexpr int kPriorityZ = 0;
constexpr std::size_t kGreedyThresholds = 24;

std::string idx(std::size_t n) { return std::to_string(n); }

double sign_of(const Dataset& data, std::size_t i) { return data.label[i] == 1 ? 1.0 : -1.0; }

std::vector<std::size_t> sorted_unique(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

void check_spec(const Dataset& data, const FormulationSpec& spec) {
  if (data.empty()) throw ModelError("cannot build a tree formulation on an empty dataset");
  if (spec.depth > TreeTopology::kMaxDepth) {
    throw ModelError("depth " + idx(spec.depth) + " exceeds the maximum of " + idx(TreeTopology::kMaxDepth));
  }
  const std::size_t branches = (std::size_t{1} << spec.depth) - 1;
  if (spec.max_splits > branches) {
    throw ModelError("S = " + idx(spec.max_splits) + " exceeds the " + idx(branches) + " branch nodes of depth " +
                     idx(spec.depth));
  }
  if (!(spec.c > 0.0) || !std::isfinite(spec.c)) throw ModelError("C must be positive and finite");
  if (!(spec.m_svm > 0.0) || !(spec.multivariate_m > 0.0) || !(spec.multivariate_mu > 0.0)) {
    throw ModelError("big-M values and mu must be positive");
  }
  if (spec.roles.split.empty() || spec.roles.leaf.empty()) throw ModelError("feature roles must not be empty");
  for (const auto f : spec.roles.split) {
    if (f >= data.cols) throw ModelError("split feature index out of range");
  }
  for (const auto f : spec.roles.leaf) {
    if (f >= data.cols) throw ModelError("leaf feature index out of range");
  }
}

Formulation build_common(const Dataset& data, const FormulationSpec& spec, int classes) {
  check_spec(data, spec);
  Formulation f;
  f.task = data.task;
  f.classes = classes;
  f.topology = TreeTopology(spec.depth);
  f.spec = spec;
  const auto& topo = f.topology;
  auto& m = f.model;
  auto& lay = f.layout;

  const auto constant = constant_features(data);
  const auto gaps = feature_gaps(data);
  for (const auto feat : sorted_unique(spec.roles.split)) {
    if (!constant[feat]) lay.split_features.push_back(feat);
  }
  lay.leaf_features = sorted_unique(spec.roles.leaf);
  const auto& sf = lay.split_features;
  const std::size_t np = sf.size();
  const std::size_t nb = topo.num_branches();
  const std::size_t nl = topo.num_leaves();
  const std::size_t n = data.rows;

  f.constants.c = spec.c;
  f.constants.max_splits = spec.max_splits;
  f.constants.multivariate = spec.multivariate;
  f.constants.m_svm = spec.m_svm;
  std::vector<double> mu(np, spec.multivariate_mu);
  if (!spec.multivariate) {
    f.constants.mu = gaps;
    for (std::size_t p = 0; p < np; ++p) mu[p] = gaps[sf[p]];
  }

  // Threshold range over the split features.
  double lo = 0.0, hi = 0.0, max_abs = 0.0;
  if (np > 0) {
    lo = kInf;
    hi = -kInf;
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto feat : sf) {
        lo = std::min(lo, data.at(i, feat));
        hi = std::max(hi, data.at(i, feat));
        max_abs = std::max(max_abs, std::abs(data.at(i, feat)));
      }
    }
  }
  double b_lo, b_hi;
  if (spec.multivariate) {
    const double range = std::max(static_cast<double>(np), max_abs + spec.multivariate_mu);
    b_lo = -range;
    b_hi = range;
  } else {
    b_lo = std::min(lo - 1.0, 0.0);
    b_hi = std::max(hi + 1.0, 0.0);
  }

  for (const auto node : topo.branch_nodes()) {
    const auto d = m.add_binary("d_" + idx(node));
    m.set_branch_priority(d, kPriorityD);
    lay.d.push_back(d);
  }
  lay.a.resize(nb);
  if (spec.multivariate) {
    lay.s.resize(nb);
    lay.a_abs.resize(nb);
  }
  for (const auto node : topo.branch_nodes()) {
    const auto k = topo.branch_index(node);
    for (std::size_t p = 0; p < np; ++p) {
      const std::string suffix = "_" + idx(sf[p]) + "_" + idx(node);
      if (spec.multivariate) {
        lay.a[k].push_back(m.add_continuous(-1.0, 1.0, "a" + suffix));
        const auto s = m.add_binary("s" + suffix);
        m.set_branch_priority(s, kPriorityA);
        lay.s[k].push_back(s);
        lay.a_abs[k].push_back(m.add_abs_bound(lay.a[k][p], "aabs" + suffix));
      } else {
        const auto a = m.add_binary("a" + suffix);
        m.set_branch_priority(a, kPriorityA);
        lay.a[k].push_back(a);
      }
    }
  }
  for (const auto node : topo.branch_nodes()) lay.b.push_back(m.add_continuous(b_lo, b_hi, "b_" + idx(node)));

  lay.z.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto leaf : topo.leaf_nodes()) {
      const auto z = m.add_binary("z_" + idx(i) + "_" + idx(leaf));
      m.set_branch_priority(z, kPriorityZ);
      if (nb == 0) m.set_bounds(z, 1.0, 1.0);
      lay.z[i].push_back(z);
    }
  }
  for (const auto leaf : topo.leaf_nodes()) {
    const auto l = m.add_binary("l_" + idx(leaf));
    m.set_branch_priority(l, kPriorityL);
    lay.l.push_back(l);
  }

  if (nb > 0) {
    std::vector<Term> budget;
    for (const auto d : lay.d) budget.push_back({d, 1.0});
    m.add_constraint(budget, Sense::leq, spec.max_splits, "max_splits");
  }
  for (const auto node : topo.branch_nodes()) {
    const auto k = topo.branch_index(node);
    const auto d = lay.d[k];
    const std::string tag = "_" + idx(node);
    if (spec.multivariate) {
      std::vector<Term> abs_sum{{d, -1.0}}, s_sum{{d, -1.0}};
      for (std::size_t p = 0; p < np; ++p) {
        m.add_constraint({{lay.s[k][p], 1.0}, {lay.a[k][p], -1.0}}, Sense::geq, 0.0, "s_pos_" + idx(sf[p]) + tag);
        m.add_constraint({{lay.s[k][p], 1.0}, {lay.a[k][p], 1.0}}, Sense::geq, 0.0, "s_neg_" + idx(sf[p]) + tag);
        m.add_constraint({{lay.s[k][p], 1.0}, {d, -1.0}}, Sense::leq, 0.0, "s_split_" + idx(sf[p]) + tag);
        abs_sum.push_back({lay.a_abs[k][p], 1.0});
        s_sum.push_back({lay.s[k][p], 1.0});
      }
      m.add_constraint(abs_sum, Sense::leq, 0.0, "a_norm" + tag);
      m.add_constraint(s_sum, Sense::geq, 0.0, "s_any" + tag);
    } else {
      std::vector<Term> one{{d, -1.0}};
      for (std::size_t p = 0; p < np; ++p) one.push_back({lay.a[k][p], 1.0});
      m.add_constraint(one, Sense::eq, 0.0, "one_feature" + tag);
    }
    if (node != topo.root()) {
      m.add_constraint({{d, 1.0}, {lay.d[topo.branch_index(topo.parent(node))], -1.0}}, Sense::leq, 0.0,
                       "parent" + tag);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Term> one;
    for (const auto z : lay.z[i]) one.push_back({z, 1.0});
    m.add_constraint(one, Sense::eq, 1.0, "assign_" + idx(i));
  }
  for (const auto leaf : topo.leaf_nodes()) {
    const auto q = topo.leaf_index(leaf);
    std::vector<Term> any{{lay.l[q], -1.0}};
    for (std::size_t i = 0; i < n; ++i) {
      m.add_constraint({{lay.z[i][q], 1.0}, {lay.l[q], -1.0}}, Sense::leq, 0.0,
                       "occupied_" + idx(i) + "_" + idx(leaf));
      any.push_back({lay.z[i][q], 1.0});
    }
    m.add_constraint(any, Sense::geq, 0.0, "nonempty_" + idx(leaf));
    // Without this a non-splitting node could still send points left.
    const auto left = topo.left_ancestors(leaf);
    if (!left.empty()) {
      m.add_constraint({{lay.l[q], 1.0}, {lay.d[topo.branch_index(left.back())], -1.0}}, Sense::leq, 0.0,
                       "left_needs_split_" + idx(leaf));
    }
  }
  for (const auto node : topo.branch_nodes()) {
    const auto d = lay.d[topo.branch_index(node)];
    std::vector<Term> left{{d, 1.0}}, right{{d, 1.0}};
    for (const auto leaf : topo.left_subtree_leaves(node)) left.push_back({lay.l[topo.leaf_index(leaf)], -1.0});
    for (const auto leaf : topo.right_subtree_leaves(node)) right.push_back({lay.l[topo.leaf_index(leaf)], -1.0});
    m.add_constraint(left, Sense::leq, 0.0, "split_left_" + idx(node));
    m.add_constraint(right, Sense::leq, 0.0, "split_right_" + idx(node));
  }

  // Routing, with a big-M per row from the point's own feature values.
  double m_split = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double left_top = 0.0, right_bottom = 0.0, row_abs = 0.0;
    for (std::size_t p = 0; p < np; ++p) {
      left_top = std::max(left_top, data.at(i, sf[p]) + mu[p]);
      right_bottom = std::min(right_bottom, data.at(i, sf[p]));
      row_abs = std::max(row_abs, std::abs(data.at(i, sf[p])));
    }
    // With sum |a| <= 1 the hyperplane value a.x stays within +-max|x_i|.
    const double m_left = spec.multivariate ? std::min(spec.multivariate_m, row_abs + b_hi + spec.multivariate_mu)
                                            : left_top - b_lo;
    const double m_right = spec.multivariate ? std::min(spec.multivariate_m, b_hi + row_abs) : b_hi - right_bottom;
    m_split = std::max({m_split, m_left, m_right});
    for (const auto leaf : topo.leaf_nodes()) {
      const auto z = lay.z[i][topo.leaf_index(leaf)];
      const std::string tag = "_" + idx(i) + "_" + idx(leaf) + "_";
      for (const auto node : topo.left_ancestors(leaf)) {
        const auto k = topo.branch_index(node);
        std::vector<Term> terms{{lay.b[k], -1.0}};
        for (std::size_t p = 0; p < np; ++p) {
          const double coef = spec.multivariate ? data.at(i, sf[p]) : data.at(i, sf[p]) + mu[p];
          if (coef != 0.0) terms.push_back({lay.a[k][p], coef});
        }
        const double rhs = spec.multivariate ? -spec.multivariate_mu : 0.0;
        m.add_indicator_leq(std::move(terms), rhs, z, m_left, "route_left" + tag + idx(node));
      }
      for (const auto node : topo.right_ancestors(leaf)) {
        const auto k = topo.branch_index(node);
        std::vector<Term> terms{{lay.b[k], -1.0}};
        for (std::size_t p = 0; p < np; ++p) {
          if (data.at(i, sf[p]) != 0.0) terms.push_back({lay.a[k][p], data.at(i, sf[p])});
        }
        m.add_indicator_geq(std::move(terms), 0.0, z, m_right, "route_right" + tag + idx(node));
      }
    }
  }
  f.constants.m_split = m_split;

  const std::size_t nf = lay.leaf_features.size();
  lay.beta.assign(nl, std::vector<std::vector<VarRef>>(static_cast<std::size_t>(classes)));
  lay.beta_abs = lay.beta;
  lay.delta.assign(nl, {});
  for (const auto leaf : topo.leaf_nodes()) {
    const auto q = topo.leaf_index(leaf);
    for (int k = 0; k < classes; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const std::string tag = (classes > 1 ? "_" + idx(kk) : std::string()) + "_";
      for (std::size_t p = 0; p < nf; ++p) {
        const std::string suffix = tag + idx(lay.leaf_features[p]) + "_" + idx(leaf);
        const auto beta = m.add_continuous(-kInf, kInf, "beta" + suffix);
        lay.beta[q][kk].push_back(beta);
        lay.beta_abs[q][kk].push_back(m.add_abs_objective_term(beta, 1.0, "betaabs" + suffix));
      }
      lay.delta[q].push_back(m.add_continuous(-kInf, kInf, "delta" + tag + idx(leaf)));
    }
  }
  lay.eps.assign(nl, std::vector<std::vector<std::optional<VarRef>>>(n));
  return f;
}

// beta . x_i + delta for class k at leaf q, as terms scaled by `scale`.
void append_score(const Formulation& f, const Dataset& data, std::size_t q, std::size_t k, std::size_t i,
                  double scale, std::vector<Term>& terms) {
  const auto& lay = f.layout;
  for (std::size_t p = 0; p < lay.leaf_features.size(); ++p) {
    const double x = data.at(i, lay.leaf_features[p]);
    if (x != 0.0) terms.push_back({lay.beta[q][k][p], scale * x});
  }
  terms.push_back({lay.delta[q][k], scale});
}

// ---- leaf fitting -------------------------------------------------------

struct LeafFit {
  std::vector<std::vector<double>> weights;
  std::vector<double> intercepts;
  double objective = 0.0;
};

LeafFit zero_leaf(const Formulation& f) {
  LeafFit fit;
  fit.weights.assign(static_cast<std::size_t>(f.classes), std::vector<double>(f.layout.leaf_features.size(), 0.0));
  fit.intercepts.assign(static_cast<std::size_t>(f.classes), 0.0);
  return fit;
}

// The SVM of one leaf restricted to `points`, solved as an LP.
std::optional<LeafFit> fit_leaf(const Formulation& f, const Dataset& data, const std::vector<std::size_t>& points) {
  LeafFit fit = zero_leaf(f);
  if (points.empty()) return fit;
  const auto& feats = f.layout.leaf_features;
  const auto nk = static_cast<std::size_t>(f.classes);
  const double c = f.spec.c;
  MilpModel m;
  std::vector<std::vector<VarRef>> beta(nk);
  std::vector<VarRef> delta;
  for (std::size_t k = 0; k < nk; ++k) {
    for (std::size_t p = 0; p < feats.size(); ++p) {
      beta[k].push_back(m.add_continuous(-kInf, kInf, "beta"));
      m.add_abs_objective_term(beta[k].back(), 1.0);
    }
    delta.push_back(m.add_continuous(-kInf, kInf, "delta"));
  }
  auto score = [&](std::size_t k, std::size_t i, double scale, std::vector<Term>& terms) {
    for (std::size_t p = 0; p < feats.size(); ++p) {
      const double x = data.at(i, feats[p]);
      if (x != 0.0) terms.push_back({beta[k][p], scale * x});
    }
    terms.push_back({delta[k], scale});
  };
  for (const auto i : points) {
    if (f.task == Task::regression) {
      const auto e = m.add_continuous(0.0, kInf, "e");
      m.add_objective(e, c);
      std::vector<Term> up{{e, -1.0}}, down{{e, 1.0}};
      score(0, i, 1.0, up);
      score(0, i, 1.0, down);
      m.add_constraint(std::move(up), Sense::leq, data.target[i]);
      m.add_constraint(std::move(down), Sense::geq, data.target[i]);
    } else if (f.task == Task::binary) {
      const auto e = m.add_continuous(0.0, kInf, "e");
      m.add_objective(e, c);
      std::vector<Term> t{{e, 1.0}};
      score(0, i, sign_of(data, i), t);
      m.add_constraint(std::move(t), Sense::geq, 1.0);
    } else {
      const auto y = static_cast<std::size_t>(data.label[i]);
      for (std::size_t k = 0; k < nk; ++k) {
        if (k == y) continue;
        const auto e = m.add_continuous(0.0, kInf, "e");
        m.add_objective(e, c);
        std::vector<Term> t{{e, 1.0}};
        score(y, i, 1.0, t);
        score(k, i, -1.0, t);
        m.add_constraint(std::move(t), Sense::geq, 2.0);
      }
    }
  }
  const auto sol = solve_lp(m);
  if (sol.status != LpStatus::optimal) return std::nullopt;
  for (std::size_t k = 0; k < nk; ++k) {
    for (std::size_t p = 0; p < feats.size(); ++p) fit.weights[k][p] = sol.values[beta[k][p].index];
    fit.intercepts[k] = sol.values[delta[k].index];
  }
  fit.objective = sol.objective;
  return fit;
}

using LeafCache = std::map<std::vector<std::size_t>, std::optional<LeafFit>>;

const std::optional<LeafFit>& cached_fit(const Formulation& f, const Dataset& data,
                                         const std::vector<std::size_t>& points, LeafCache& cache) {
  auto it = cache.find(points);
  if (it == cache.end()) it = cache.emplace(points, fit_leaf(f, data, points)).first;
  return it->second;
}

double leaf_cost(const Formulation& f, const Dataset& data, const std::vector<std::size_t>& points,
                 LeafCache& cache) {
  const auto& fit = cached_fit(f, data, points, cache);
  return fit ? fit->objective : kInf;
}

// ---- structures ---------------------------------------------------------

TreeStructure empty_structure(const Formulation& f) {
  const std::size_t nb = f.topology.num_branches();
  TreeStructure st;
  st.active.assign(nb, false);
  st.feature.assign(nb, 0);
  st.weights.assign(nb, std::vector<double>(f.layout.split_features.size(), 0.0));
  st.threshold.assign(nb, 0.0);
  return st;
}

double split_value(const Formulation& f, const Dataset& data, const TreeStructure& st, std::size_t k,
                   std::size_t i) {
  const auto& sf = f.layout.split_features;
  if (!f.spec.multivariate) return data.at(i, sf[st.feature[k]]);
  double v = 0.0;
  for (std::size_t p = 0; p < sf.size(); ++p) v += st.weights[k][p] * data.at(i, sf[p]);
  return v;
}

NodeId route_point(const Formulation& f, const Dataset& data, const TreeStructure& st, std::size_t i) {
  const auto& topo = f.topology;
  NodeId node = topo.root();
  while (topo.is_branch(node)) {
    const auto k = topo.branch_index(node);
    const bool left = st.active[k] && split_value(f, data, st, k, i) < st.threshold[k];
    node = left ? TreeTopology::left_child(node) : TreeTopology::right_child(node);
  }
  return node;
}

void deactivate_subtree(const TreeTopology& topo, TreeStructure& st, NodeId node) {
  if (!topo.is_branch(node)) return;
  st.active[topo.branch_index(node)] = false;
  deactivate_subtree(topo, st, TreeTopology::left_child(node));
  deactivate_subtree(topo, st, TreeTopology::right_child(node));
}

// Enforces parent activity, the split budget, valid features and non-zero
// multivariate weights with sum of magnitudes at most one.
void normalize(const Formulation& f, TreeStructure& st) {
  const auto& topo = f.topology;
  const std::size_t np = f.layout.split_features.size();
  std::size_t used = 0;
  for (const auto node : topo.branch_nodes()) {
    const auto k = topo.branch_index(node);
    bool on = st.active[k] && np > 0 && used < f.spec.max_splits && std::isfinite(st.threshold[k]);
    if (on && node != topo.root()) on = st.active[topo.branch_index(topo.parent(node))];
    if (on && !f.spec.multivariate) on = st.feature[k] < np;
    if (on && f.spec.multivariate) {
      double total = 0.0;
      for (auto& w : st.weights[k]) {
        if (std::abs(w) < 1e-9) w = 0.0;
        total += std::abs(w);
      }
      if (total < 1e-9) {
        on = false;
      } else if (total > 1.0) {
        for (auto& w : st.weights[k]) w /= total;
      }
    }
    st.active[k] = on;
    used += on;
  }
}

std::optional<std::vector<double>> complete_impl(const Formulation& f, const Dataset& data, TreeStructure st,
                                                 LeafCache& cache) {
  const auto& topo = f.topology;
  const auto& lay = f.layout;
  const std::size_t n = data.rows;
  const std::size_t np = lay.split_features.size();
  normalize(f, st);

  std::vector<NodeId> leaf_of(n);
  for (;;) {
    std::vector<std::size_t> count(topo.num_leaves(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      leaf_of[i] = route_point(f, data, st, i);
      ++count[topo.leaf_index(leaf_of[i])];
    }
    bool changed = false;
    for (const auto node : topo.branch_nodes()) {
      if (!st.active[topo.branch_index(node)]) continue;
      auto occupied = [&](const std::vector<NodeId>& leaves) {
        return std::any_of(leaves.begin(), leaves.end(), [&](NodeId q) { return count[topo.leaf_index(q)] > 0; });
      };
      if (!occupied(topo.left_subtree_leaves(node)) || !occupied(topo.right_subtree_leaves(node))) {
        deactivate_subtree(topo, st, node);
        changed = true;
        break;
      }
    }
    if (!changed) break;
  }

  std::vector<double> x(f.model.num_variables(), 0.0);
  auto set = [&](VarRef v, double value) { x[v.index] = value; };

  for (const auto node : topo.branch_nodes()) {
    const auto k = topo.branch_index(node);
    if (!st.active[k]) continue;
    set(lay.d[k], 1.0);
    for (std::size_t p = 0; p < np; ++p) {
      if (f.spec.multivariate) {
        const double w = st.weights[k][p];
        set(lay.a[k][p], w);
        set(lay.a_abs[k][p], std::abs(w));
        set(lay.s[k][p], w != 0.0 ? 1.0 : 0.0);
      } else {
        set(lay.a[k][p], p == st.feature[k] ? 1.0 : 0.0);
      }
    }
    // b sits on the smallest value sent right; left points keep a margin of mu.
    const auto right = topo.right_subtree_leaves(node);
    const NodeId right_lo = right.front(), right_hi = right.back();
    const auto left = topo.left_subtree_leaves(node);
    const NodeId left_lo = left.front(), left_hi = left.back();
    double b = kInf, left_max = -kInf;
    for (std::size_t i = 0; i < n; ++i) {
      if (leaf_of[i] >= right_lo && leaf_of[i] <= right_hi) b = std::min(b, split_value(f, data, st, k, i));
      if (leaf_of[i] >= left_lo && leaf_of[i] <= left_hi) left_max = std::max(left_max, split_value(f, data, st, k, i));
    }
    const double mu = f.spec.multivariate ? f.spec.multivariate_mu : f.constants.mu[lay.split_features[st.feature[k]]];
    if (left_max + mu > b + 1e-9) return std::nullopt;
    const auto& var = f.model.variable(lay.b[k]);
    if (b < var.lower || b > var.upper) return std::nullopt;
    set(lay.b[k], b);
  }

  std::vector<std::vector<std::size_t>> members(topo.num_leaves());
  for (std::size_t i = 0; i < n; ++i) {
    const auto q = topo.leaf_index(leaf_of[i]);
    members[q].push_back(i);
    set(lay.z[i][q], 1.0);
  }
  const auto nk = static_cast<std::size_t>(f.classes);
  const double big_m = f.spec.m_svm;
  for (std::size_t q = 0; q < topo.num_leaves(); ++q) {
    if (members[q].empty()) continue;
    set(lay.l[q], 1.0);
    const auto& fit = cached_fit(f, data, members[q], cache);
    if (!fit) return std::nullopt;
    for (std::size_t k = 0; k < nk; ++k) {
      for (std::size_t p = 0; p < lay.leaf_features.size(); ++p) {
        set(lay.beta[q][k][p], fit->weights[k][p]);
        set(lay.beta_abs[q][k][p], std::abs(fit->weights[k][p]));
      }
      set(lay.delta[q][k], fit->intercepts[k]);
    }
  }
  // Slacks for every (leaf, point) pair, including the relaxed rows.
  for (std::size_t q = 0; q < topo.num_leaves(); ++q) {
    for (std::size_t i = 0; i < n; ++i) {
      const double relax = x[lay.z[i][q].index] > 0.5 ? 0.0 : big_m;
      std::vector<double> score(nk);
      for (std::size_t k = 0; k < nk; ++k) {
        double s = x[lay.delta[q][k].index];
        for (std::size_t p = 0; p < lay.leaf_features.size(); ++p) {
          s += x[lay.beta[q][k][p].index] * data.at(i, lay.leaf_features[p]);
        }
        score[k] = s;
      }
      for (std::size_t k = 0; k < nk; ++k) {
        const auto& e = lay.eps[q][i][k];
        if (!e) continue;
        double need = 0.0;
        if (f.task == Task::regression) {
          need = std::abs(score[0] - data.target[i]) - relax;
        } else if (f.task == Task::binary) {
          need = 1.0 - sign_of(data, i) * score[0] - relax;
        } else {
          need = score[k] + 2.0 - score[static_cast<std::size_t>(data.label[i])] - relax;
        }
        set(*e, std::max(0.0, need));
      }
    }
  }
  return x;
}

TreeStructure structure_from_lp(const Formulation& f, std::span<const double> v, bool by_rank) {
  const auto& topo = f.topology;
  const auto& lay = f.layout;
  const std::size_t np = lay.split_features.size();
  auto st = empty_structure(f);
  if (np == 0) return st;
  for (const auto node : topo.branch_nodes()) {
    const auto k = topo.branch_index(node);
    const double d = v[lay.d[k].index];
    st.active[k] = by_rank ? d > 1e-6 : d >= 0.5;
    if (f.spec.multivariate) {
      for (std::size_t p = 0; p < np; ++p) st.weights[k][p] = v[lay.a[k][p].index];
      st.threshold[k] = v[lay.b[k].index] - f.spec.multivariate_mu / 2.0;
    } else {
      std::size_t best = 0;
      for (std::size_t p = 1; p < np; ++p) {
        if (v[lay.a[k][p].index] > v[lay.a[k][best].index]) best = p;
      }
      st.feature[k] = best;
      st.threshold[k] = v[lay.b[k].index] - f.constants.mu[lay.split_features[best]] / 2.0;
    }
  }
  if (by_rank) {
    // Keep the S nodes with the largest d, parents first.
    std::vector<NodeId> order = topo.branch_nodes();
    std::stable_sort(order.begin(), order.end(), [&](NodeId x, NodeId y) {
      return v[lay.d[topo.branch_index(x)].index] > v[lay.d[topo.branch_index(y)].index];
    });
    std::vector<bool> keep(topo.num_branches(), false);
    std::size_t used = 0;
    for (const auto node : order) {
      const auto k = topo.branch_index(node);
      if (!st.active[k] || used >= f.spec.max_splits) continue;
      if (node != topo.root() && !keep[topo.branch_index(topo.parent(node))]) continue;
      keep[k] = true;
      ++used;
    }
    for (std::size_t k = 0; k < keep.size(); ++k) st.active[k] = keep[k];
  }
  return st;
}

// Top-down: each node takes the axis split (from up to kGreedyThresholds
// midpoints per feature) that most reduces the summed cost of the two
// children fitted as single leaves.
TreeStructure greedy_structure(const Formulation& f, const Dataset& data, LeafCache& cache) {
  const auto& topo = f.topology;
  const auto& sf = f.layout.split_features;
  auto st = empty_structure(f);
  if (sf.empty() || f.spec.max_splits == 0) return st;
  std::vector<std::vector<std::size_t>> at(topo.num_nodes() + 1);
  at[topo.root()].resize(data.rows);
  std::iota(at[topo.root()].begin(), at[topo.root()].end(), std::size_t{0});
  std::size_t used = 0;
  for (const auto node : topo.branch_nodes()) {
    const auto k = topo.branch_index(node);
    const auto& points = at[node];
    if (points.size() < 2 || used >= f.spec.max_splits) continue;
    if (node != topo.root() && !st.active[topo.branch_index(topo.parent(node))]) continue;
    double best = leaf_cost(f, data, points, cache);
    const double base = best;
    std::optional<std::pair<std::size_t, double>> choice;
    for (std::size_t p = 0; p < sf.size(); ++p) {
      std::vector<double> values;
      for (const auto i : points) values.push_back(data.at(i, sf[p]));
      std::sort(values.begin(), values.end());
      values.erase(std::unique(values.begin(), values.end()), values.end());
      std::vector<double> cuts;
      const double min_gap = f.spec.multivariate ? f.spec.multivariate_mu : 0.0;
      for (std::size_t j = 0; j + 1 < values.size(); ++j) {
        if (values[j + 1] - values[j] >= min_gap) cuts.push_back(0.5 * (values[j] + values[j + 1]));
      }
      if (cuts.size() > kGreedyThresholds) {
        std::vector<double> picked;
        for (std::size_t j = 0; j < kGreedyThresholds; ++j) {
          picked.push_back(cuts[(j * (cuts.size() - 1)) / (kGreedyThresholds - 1)]);
        }
        cuts = std::move(picked);
      }
      for (const double t : cuts) {
        std::vector<std::size_t> left, right;
        for (const auto i : points) (data.at(i, sf[p]) < t ? left : right).push_back(i);
        const double cost = leaf_cost(f, data, left, cache) + leaf_cost(f, data, right, cache);
        if (cost < best) {
          best = cost;
          choice = {p, t};
        }
      }
    }
    if (!choice || best >= base - 1e-9 * std::max(1.0, std::abs(base))) continue;
    st.active[k] = true;
    st.feature[k] = choice->first;
    st.weights[k].assign(sf.size(), 0.0);
    st.weights[k][choice->first] = 1.0;
    st.threshold[k] = choice->second;
    ++used;
    for (const auto i : points) {
      const bool left = data.at(i, sf[choice->first]) < choice->second;
      at[left ? TreeTopology::left_child(node) : TreeTopology::right_child(node)].push_back(i);
    }
  }
  return st;
}

double snap_threshold(const Dataset& data, std::size_t feature, double b) {
  double hi = kInf;
  for (std::size_t i = 0; i < data.rows; ++i) {
    const double v = data.at(i, feature);
    if (v >= b - 1e-6) hi = std::min(hi, v);
  }
  if (!std::isfinite(hi)) return b;
  double lo = -kInf;
  for (std::size_t i = 0; i < data.rows; ++i) {
    const double v = data.at(i, feature);
    if (v < hi) lo = std::max(lo, v);
  }
  if (!std::isfinite(lo)) return b;
  return 0.5 * (lo + hi);
}

}  // namespace

FeatureRoles default_roles(const Dataset& data) {
  FeatureRoles roles;
  roles.split.resize(data.cols);
  std::iota(roles.split.begin(), roles.split.end(), std::size_t{0});
  roles.leaf = roles.split;
  return roles;
}

Formulation build_ormt(const Dataset& data, const FormulationSpec& spec) {
  if (data.task != Task::regression) throw ModelError("ORMT needs a regression dataset");
  auto f = build_common(data, spec, 1);
  const auto& topo = f.topology;
  for (const auto leaf : topo.leaf_nodes()) {
    const auto q = topo.leaf_index(leaf);
    for (std::size_t i = 0; i < data.rows; ++i) {
      const auto e = f.model.add_continuous(0.0, kInf, "eps_" + idx(i) + "_" + idx(leaf));
      f.model.add_objective(e, spec.c);
      f.layout.eps[q][i] = {e};
      const auto z = f.layout.z[i][q];
      std::vector<Term> up{{e, -1.0}}, down{{e, 1.0}};
      append_score(f, data, q, 0, i, 1.0, up);
      append_score(f, data, q, 0, i, 1.0, down);
      const std::string tag = "_" + idx(i) + "_" + idx(leaf);
      f.model.add_indicator_leq(std::move(up), data.target[i], z, spec.m_svm, "resid_up" + tag);
      f.model.add_indicator_geq(std::move(down), data.target[i], z, spec.m_svm, "resid_down" + tag);
    }
  }
  return f;
}

Formulation build_ocmt_binary(const Dataset& data, const FormulationSpec& spec) {
  if (data.task != Task::binary || data.classes != 2) throw ModelError("binary OCMT needs exactly two classes");
  auto f = build_common(data, spec, 1);
  const auto& topo = f.topology;
  for (const auto leaf : topo.leaf_nodes()) {
    const auto q = topo.leaf_index(leaf);
    for (std::size_t i = 0; i < data.rows; ++i) {
      const auto e = f.model.add_continuous(0.0, kInf, "eps_" + idx(i) + "_" + idx(leaf));
      f.model.add_objective(e, spec.c);
      f.layout.eps[q][i] = {e};
      std::vector<Term> terms{{e, 1.0}};
      append_score(f, data, q, 0, i, sign_of(data, i), terms);
      f.model.add_indicator_geq(std::move(terms), 1.0, f.layout.z[i][q], spec.m_svm,
                                "hinge_" + idx(i) + "_" + idx(leaf));
    }
  }
  return f;
}

Formulation build_ocmt_multiclass(const Dataset& data, const FormulationSpec& spec) {
  if (data.task != Task::multiclass || data.classes < 3) throw ModelError("multiclass OCMT needs three or more classes");
  auto f = build_common(data, spec, data.classes);
  const auto& topo = f.topology;
  const auto nk = static_cast<std::size_t>(data.classes);
  for (const auto leaf : topo.leaf_nodes()) {
    const auto q = topo.leaf_index(leaf);
    for (std::size_t i = 0; i < data.rows; ++i) {
      const auto y = static_cast<std::size_t>(data.label[i]);
      f.layout.eps[q][i].assign(nk, std::nullopt);
      for (std::size_t k = 0; k < nk; ++k) {
        if (k == y) continue;
        const std::string tag = "_" + idx(k) + "_" + idx(i) + "_" + idx(leaf);
        const auto e = f.model.add_continuous(0.0, kInf, "eps" + tag);
        f.model.add_objective(e, spec.c);
        f.layout.eps[q][i][k] = e;
        std::vector<Term> terms{{e, 1.0}};
        append_score(f, data, q, y, i, 1.0, terms);
        append_score(f, data, q, k, i, -1.0, terms);
        f.model.add_indicator_geq(std::move(terms), 2.0, f.layout.z[i][q], spec.m_svm, "margin" + tag);
      }
    }
  }
  return f;
}

Formulation build_formulation(const Dataset& data, const FormulationSpec& spec) {
  switch (data.task) {
    case Task::regression:
      return build_ormt(data, spec);
    case Task::binary:
      return build_ocmt_binary(data, spec);
    case Task::multiclass:
      return build_ocmt_multiclass(data, spec);
  }
  throw ModelError("unknown task");
}

TreeStructure structure_from_tree(const Formulation& f, const ModelTree& tree) {
  if (tree.depth != f.topology.depth()) throw ModelError("tree depth does not match the formulation");
  const auto& sf = f.layout.split_features;
  auto st = empty_structure(f);
  for (std::size_t k = 0; k < tree.splits.size(); ++k) {
    const auto& rule = tree.splits[k];
    st.threshold[k] = rule.threshold;
    if (rule.kind == SplitRule::Kind::univariate) {
      const auto it = std::find(sf.begin(), sf.end(), rule.feature);
      if (it == sf.end()) continue;
      const auto p = static_cast<std::size_t>(it - sf.begin());
      st.active[k] = true;
      st.feature[k] = p;
      st.weights[k][p] = 1.0;
    } else if (rule.kind == SplitRule::Kind::multivariate && f.spec.multivariate) {
      st.active[k] = true;
      for (std::size_t p = 0; p < sf.size(); ++p) {
        st.weights[k][p] = sf[p] < rule.weights.size() ? rule.weights[sf[p]] : 0.0;
      }
    }
  }
  return st;
}

std::optional<std::vector<double>> complete_assignment(const Formulation& f, const Dataset& data,
                                                       TreeStructure structure) {
  LeafCache cache;
  return complete_impl(f, data, std::move(structure), cache);
}

std::optional<std::vector<double>> assignment_from_tree(const Formulation& f, const Dataset& data,
                                                        const ModelTree& tree) {
  return complete_assignment(f, data, structure_from_tree(f, tree));
}

IncumbentHeuristic make_tree_heuristic(const Formulation& f, const Dataset& data, std::vector<TreeStructure> seeds) {
  auto cache = std::make_shared<LeafCache>();
  auto first = std::make_shared<bool>(true);
  auto initial = std::make_shared<std::vector<TreeStructure>>(std::move(seeds));
  return [&f, &data, cache, first, initial](std::span<const double> lp) {
    std::vector<std::vector<double>> out;
    auto add = [&](TreeStructure st) {
      if (auto x = complete_impl(f, data, std::move(st), *cache)) out.push_back(std::move(*x));
    };
    if (*first) {
      *first = false;
      for (auto& st : *initial) add(std::move(st));
      initial->clear();
      add(greedy_structure(f, data, *cache));
      add(empty_structure(f));
    }
    add(structure_from_lp(f, lp, false));
    add(structure_from_lp(f, lp, true));
    // Bound the memo; keys are point sets, so it can grow with every node.
    if (cache->size() > 20000) cache->clear();
    return out;
  };
}

ModelTree extract_tree(const Formulation& f, std::span<const double> v, const Dataset& data,
                       const PreprocessParams& preprocess) {
  if (v.size() != f.model.num_variables()) throw ModelError("assignment does not match the formulation");
  const auto& topo = f.topology;
  const auto& lay = f.layout;
  ModelTree tree;
  tree.depth = topo.depth();
  tree.task = f.task;
  tree.num_features = data.cols;
  tree.feature_names = data.feature_names;
  tree.split_features = lay.split_features;
  tree.leaf_features = lay.leaf_features;
  tree.preprocess = preprocess;
  tree.constants = f.constants;

  for (const auto node : topo.branch_nodes()) {
    const auto k = topo.branch_index(node);
    if (v[lay.d[k].index] < 0.5) {
      tree.splits.push_back(SplitRule::pass_right());
      continue;
    }
    const double b = v[lay.b[k].index];
    if (f.spec.multivariate) {
      std::vector<double> w(data.cols, 0.0);
      double total = 0.0;
      for (std::size_t p = 0; p < lay.split_features.size(); ++p) {
        const double a = v[lay.a[k][p].index];
        w[lay.split_features[p]] = std::abs(a) < 1e-12 ? 0.0 : a;
        total += std::abs(w[lay.split_features[p]]);
      }
      double threshold = b - f.spec.multivariate_mu / 2.0;
      if (total > 1.0) {
        for (auto& x : w) x /= total;
        threshold /= total;
      }
      tree.splits.push_back(SplitRule::multivariate(std::move(w), threshold));
    } else {
      std::optional<std::size_t> chosen;
      for (std::size_t p = 0; p < lay.split_features.size(); ++p) {
        if (v[lay.a[k][p].index] >= 0.5) {
          chosen = p;
          break;
        }
      }
      if (!chosen) throw SolverError("node " + idx(node) + " splits but no feature variable is set");
      const auto feature = lay.split_features[*chosen];
      tree.splits.push_back(SplitRule::univariate(feature, snap_threshold(data, feature, b)));
    }
  }
  const auto nk = static_cast<std::size_t>(f.classes);
  for (const auto leaf : topo.leaf_nodes()) {
    const auto q = topo.leaf_index(leaf);
    LeafModel model;
    model.weights.assign(nk, std::vector<double>(lay.leaf_features.size(), 0.0));
    model.intercepts.assign(nk, 0.0);
    if (v[lay.l[q].index] >= 0.5) {
      for (std::size_t k = 0; k < nk; ++k) {
        for (std::size_t p = 0; p < lay.leaf_features.size(); ++p) model.weights[k][p] = v[lay.beta[q][k][p].index];
        model.intercepts[k] = v[lay.delta[q][k].index];
      }
    }
    tree.leaves.push_back(std::move(model));
  }
  return tree;
}

double training_objective(const ModelTree& tree, const Dataset& data, double c) {
  if (data.cols != tree.num_features) throw ModelError("dataset does not match the tree's feature count");
  double reg = 0.0;
  for (const auto& leaf : tree.leaves) {
    for (const auto& w : leaf.weights) {
      for (const double x : w) reg += std::abs(x);
    }
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < data.rows; ++i) {
    const auto row = data.row(i);
    const auto scores = tree.leaf_scores(tree.route(row), row);
    switch (tree.task) {
      case Task::regression:
        loss += std::abs(scores[0] - data.target[i]);
        break;
      case Task::binary:
        loss += std::max(0.0, 1.0 - sign_of(data, i) * scores[0]);
        break;
      case Task::multiclass: {
        const auto y = static_cast<std::size_t>(data.label[i]);
        for (std::size_t k = 0; k < scores.size(); ++k) {
          if (k != y) loss += std::max(0.0, 2.0 - (scores[y] - scores[k]));
        }
        break;
      }
    }
  }
  return reg + c * loss;
}

TrainResult train_tree(const Dataset& data, const PreprocessParams& preprocess, const TrainOptions& options) {
  const auto f = build_formulation(data, options.spec);
  log::debug("formulation: ", f.model.num_variables(), " variables (", f.model.num_binaries(), " binary), ",
             f.model.num_constraints(), " constraints");
  std::vector<TreeStructure> seeds;
  SolverConfig cfg;
  cfg.time_limit = options.time_limit;
  cfg.relative_gap = options.relative_gap;
  cfg.node_limit = options.node_limit;
  cfg.verbose = options.verbose;
  cfg.warm_start = options.warm_start;
  if (options.warm_tree && options.warm_tree->depth == f.topology.depth()) {
    seeds.push_back(structure_from_tree(f, *options.warm_tree));
    if (!cfg.warm_start) cfg.warm_start = complete_assignment(f, data, seeds.back());
  }
  cfg.heuristic = make_tree_heuristic(f, data, std::move(seeds));

  TrainResult result;
  result.outcome = solve(f.model, cfg);
  if (result.outcome.assignment) {
    auto tree = extract_tree(f, *result.outcome.assignment, data, preprocess);
    tree.provenance.status = std::string(to_string(result.outcome.status));
    tree.provenance.objective = result.outcome.objective;
    tree.provenance.best_bound = result.outcome.best_bound;
    tree.provenance.gap = result.outcome.gap;
    tree.provenance.wall_seconds = result.outcome.wall_seconds;
    tree.provenance.nodes = result.outcome.nodes;
    result.tree = std::move(tree);
  }
  return result;
}

}  // namespace optree
