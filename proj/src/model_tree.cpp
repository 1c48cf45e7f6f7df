#include "optree/model_tree.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "optree/error.hpp"

namespace optree {
namespace {

using nlohmann::json;

std::string kind_name(SplitRule::Kind k) {
  switch (k) {
    case SplitRule::Kind::pass_right:
      return "pass-right";
    case SplitRule::Kind::univariate:
      return "univariate";
    case SplitRule::Kind::multivariate:
      return "multivariate";
  }
  return "pass-right";
}

SplitRule::Kind parse_kind(const std::string& s) {
  if (s == "pass-right") return SplitRule::Kind::pass_right;
  if (s == "univariate") return SplitRule::Kind::univariate;
  if (s == "multivariate") return SplitRule::Kind::multivariate;
  throw FormatError("unknown split kind '" + s + "'");
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw FormatError(std::string("model file is missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("model field '") + key + "' has the wrong type: " + e.what());
  }
}

}  // namespace

NodeId ModelTree::route(std::span<const double> x) const {
  if (x.size() != num_features) {
    throw ModelError("expected " + std::to_string(num_features) + " features, got " + std::to_string(x.size()));
  }
  const NodeId first_leaf = NodeId{1} << depth;
  NodeId n = 1;
  while (n < first_leaf) {
    const SplitRule& rule = splits[n - 1];
    bool left = false;
    switch (rule.kind) {
      case SplitRule::Kind::pass_right:
        break;
      case SplitRule::Kind::univariate:
        left = x[rule.feature] < rule.threshold;
        break;
      case SplitRule::Kind::multivariate: {
        double s = 0.0;
        for (std::size_t f = 0; f < num_features; ++f) s += rule.weights[f] * x[f];
        left = s < rule.threshold;
        break;
      }
    }
    n = left ? 2 * n : 2 * n + 1;
  }
  return n;
}

std::vector<double> ModelTree::leaf_scores(NodeId leaf, std::span<const double> x) const {
  const LeafModel& m = leaves.at(leaf - (NodeId{1} << depth));
  std::vector<double> scores(m.intercepts.size());
  for (std::size_t k = 0; k < scores.size(); ++k) {
    double s = m.intercepts[k];
    for (std::size_t f = 0; f < leaf_features.size(); ++f) s += m.weights[k][f] * x[leaf_features[f]];
    scores[k] = s;
  }
  return scores;
}

Prediction ModelTree::predict_standardized(std::span<const double> x) const {
  Prediction p;
  p.leaf = route(x);
  const auto scores = leaf_scores(p.leaf, x);
  switch (task) {
    case Task::regression:
      p.value = scores[0];
      break;
    case Task::binary:
      p.value = scores[0];
      p.class_index = scores[0] >= 0.0 ? 1 : 0;
      break;
    case Task::multiclass: {
      std::size_t best = 0;
      for (std::size_t k = 1; k < scores.size(); ++k) {
        if (scores[k] > scores[best]) best = k;
      }
      p.value = scores[best];
      p.class_index = static_cast<int>(best);
      break;
    }
  }
  return p;
}

Prediction ModelTree::predict(std::span<const std::string> cells, bool* unknown) const {
  auto x = encode_row(preprocess.schema, cells, unknown);
  if (x.size() != num_features) throw ModelError("encoded row does not match the model's feature count");
  standardize_row(x, preprocess.scaling);
  return predict_standardized(x);
}

std::string ModelTree::format_prediction(const Prediction& p) const {
  if (task != Task::regression) return preprocess.schema.class_labels.at(static_cast<std::size_t>(p.class_index));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", p.value);
  return buf;
}

std::vector<NodeId> ModelTree::reachable_leaves() const {
  const NodeId first_leaf = NodeId{1} << depth;
  std::vector<NodeId> out;
  std::vector<NodeId> stack{1};
  while (!stack.empty()) {
    const NodeId n = stack.back();
    stack.pop_back();
    if (n >= first_leaf) {
      out.push_back(n);
      continue;
    }
    stack.push_back(2 * n + 1);
    if (splits[n - 1].active()) stack.push_back(2 * n);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t ModelTree::count_leaves() const { return reachable_leaves().size(); }

std::size_t ModelTree::count_splits() const {
  std::size_t k = 0;
  for (const auto& s : splits) k += s.active();
  return k;
}

void ModelTree::validate() const {
  if (depth > TreeTopology::kMaxDepth) throw ModelError("tree depth out of range");
  const std::size_t n_branch = (std::size_t{1} << depth) - 1;
  const std::size_t n_leaf = std::size_t{1} << depth;
  if (splits.size() != n_branch) throw ModelError("expected " + std::to_string(n_branch) + " split rules");
  if (leaves.size() != n_leaf) throw ModelError("expected " + std::to_string(n_leaf) + " leaf models");
  if (feature_names.size() != num_features) throw ModelError("feature name count does not match feature count");
  if (preprocess.scaling.size() != num_features) throw ModelError("standardization does not match feature count");
  if (leaf_features.empty()) throw ModelError("tree has no leaf-model features");
  for (const auto f : leaf_features) {
    if (f >= num_features) throw ModelError("leaf feature index out of range");
  }
  for (const auto f : split_features) {
    if (f >= num_features) throw ModelError("split feature index out of range");
  }
  for (std::size_t i = 0; i < num_features; ++i) {
    if (!(preprocess.scaling.stddev[i] > 0.0)) throw ModelError("standard deviations must be positive");
  }
  std::size_t classes = 1;
  if (task == Task::binary && preprocess.schema.class_labels.size() != 2) {
    throw ModelError("binary tree needs exactly two class labels");
  }
  if (task == Task::multiclass) {
    classes = preprocess.schema.class_labels.size();
    if (classes < 3) throw ModelError("multiclass tree needs at least three class labels");
  }
  for (std::size_t k = 0; k < n_branch; ++k) {
    const SplitRule& rule = splits[k];
    const NodeId n = static_cast<NodeId>(k + 1);
    if (rule.active() && n > 1 && !splits[n / 2 - 1].active()) {
      throw ModelError("node " + std::to_string(n) + " splits although its parent does not");
    }
    if (!std::isfinite(rule.threshold)) throw ModelError("non-finite split threshold");
    if (rule.kind == SplitRule::Kind::univariate) {
      if (std::find(split_features.begin(), split_features.end(), rule.feature) == split_features.end()) {
        throw ModelError("node " + std::to_string(n) + " splits on a feature that is not split-eligible");
      }
    } else if (rule.kind == SplitRule::Kind::multivariate) {
      if (rule.weights.size() != num_features) throw ModelError("multivariate weight vector has the wrong length");
      double total = 0.0;
      for (std::size_t f = 0; f < num_features; ++f) {
        if (!std::isfinite(rule.weights[f])) throw ModelError("non-finite multivariate weight");
        total += std::abs(rule.weights[f]);
      }
      if (total > 1.0 + 1e-6) {
        throw ModelError("node " + std::to_string(n) + " has multivariate weights with sum of magnitudes " +
                         std::to_string(total) + " > 1");
      }
    }
  }
  for (const auto& leaf : leaves) {
    if (leaf.weights.size() != classes || leaf.intercepts.size() != classes) {
      throw ModelError("leaf model has the wrong number of linear models");
    }
    for (const auto& w : leaf.weights) {
      if (w.size() != leaf_features.size()) throw ModelError("leaf weight vector has the wrong length");
    }
  }
}

std::string to_json(const ModelTree& tree) {
  json j;
  j["schema"] = kModelSchema;
  j["task"] = std::string(to_string(tree.task));
  j["depth"] = tree.depth;
  j["features"] = {{"names", tree.feature_names}, {"split", tree.split_features}, {"leaf", tree.leaf_features}};

  const auto& schema = tree.preprocess.schema;
  json columns = json::array();
  for (const auto& c : schema.columns) {
    columns.push_back({{"name", c.name}, {"categorical", c.categorical}, {"categories", c.categories}});
  }
  std::vector<bool> constant(tree.preprocess.scaling.constant.begin(), tree.preprocess.scaling.constant.end());
  j["preprocess"] = {{"label", schema.label},
                     {"columns", columns},
                     {"class_labels", schema.class_labels},
                     {"mean", tree.preprocess.scaling.mean},
                     {"stddev", tree.preprocess.scaling.stddev},
                     {"constant", constant}};
  j["constants"] = {{"C", tree.constants.c},
                    {"S", tree.constants.max_splits},
                    {"multivariate", tree.constants.multivariate},
                    {"mu", tree.constants.mu},
                    {"M_split", tree.constants.m_split},
                    {"M_svm", tree.constants.m_svm}};

  json splits = json::array();
  for (std::size_t k = 0; k < tree.splits.size(); ++k) {
    const auto& s = tree.splits[k];
    json e = {{"node", k + 1}, {"kind", kind_name(s.kind)}};
    if (s.kind == SplitRule::Kind::univariate) e["feature"] = s.feature;
    if (s.kind == SplitRule::Kind::multivariate) e["weights"] = s.weights;
    if (s.active()) e["threshold"] = s.threshold;
    splits.push_back(e);
  }
  j["splits"] = splits;

  json leaves = json::array();
  const std::size_t first = std::size_t{1} << tree.depth;
  for (std::size_t k = 0; k < tree.leaves.size(); ++k) {
    leaves.push_back({{"node", first + k}, {"weights", tree.leaves[k].weights}, {"intercepts", tree.leaves[k].intercepts}});
  }
  j["leaves"] = leaves;
  j["provenance"] = {{"status", tree.provenance.status},
                     {"objective", tree.provenance.objective},
                     {"best_bound", tree.provenance.best_bound},
                     {"gap", tree.provenance.gap},
                     {"wall_seconds", tree.provenance.wall_seconds},
                     {"nodes", tree.provenance.nodes}};
  return j.dump(2) + "\n";
}

ModelTree model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("model file is not valid JSON: ") + e.what());
  }
  const auto version = field<std::string>(j, "schema");
  if (version != kModelSchema) {
    throw FormatError("unsupported model schema '" + version + "' (expected '" + kModelSchema + "')");
  }
  ModelTree tree;
  const auto task = parse_task(field<std::string>(j, "task"));
  if (!task || (*task != Task::regression && *task != Task::binary && *task != Task::multiclass)) {
    throw FormatError("unknown task in model file");
  }
  tree.task = *task;
  tree.depth = field<unsigned>(j, "depth");
  if (tree.depth > TreeTopology::kMaxDepth) throw ModelError("tree depth out of range");

  const json& feats = j.at("features");
  tree.feature_names = field<std::vector<std::string>>(feats, "names");
  tree.split_features = field<std::vector<std::size_t>>(feats, "split");
  tree.leaf_features = field<std::vector<std::size_t>>(feats, "leaf");
  tree.num_features = tree.feature_names.size();

  const json& pre = j.at("preprocess");
  auto& schema = tree.preprocess.schema;
  schema.label = field<std::string>(pre, "label");
  schema.task = tree.task;
  for (const auto& c : pre.at("columns")) {
    schema.columns.push_back(
        {field<std::string>(c, "name"), field<bool>(c, "categorical"), field<std::vector<std::string>>(c, "categories")});
  }
  schema.class_labels = field<std::vector<std::string>>(pre, "class_labels");
  tree.preprocess.scaling.mean = field<std::vector<double>>(pre, "mean");
  tree.preprocess.scaling.stddev = field<std::vector<double>>(pre, "stddev");
  tree.preprocess.scaling.constant = field<std::vector<bool>>(pre, "constant");
  if (tree.preprocess.scaling.stddev.size() != tree.preprocess.scaling.mean.size() ||
      tree.preprocess.scaling.constant.size() != tree.preprocess.scaling.mean.size()) {
    throw ModelError("standardization vectors differ in length");
  }

  const json& cs = j.at("constants");
  tree.constants.c = field<double>(cs, "C");
  tree.constants.max_splits = field<unsigned>(cs, "S");
  tree.constants.multivariate = field<bool>(cs, "multivariate");
  tree.constants.mu = field<std::vector<double>>(cs, "mu");
  tree.constants.m_split = field<double>(cs, "M_split");
  tree.constants.m_svm = field<double>(cs, "M_svm");

  const std::size_t n_branch = (std::size_t{1} << tree.depth) - 1;
  tree.splits.assign(n_branch, SplitRule{});
  std::vector<bool> seen(n_branch, false);
  for (const auto& e : j.at("splits")) {
    const auto node = field<std::size_t>(e, "node");
    if (node < 1 || node > n_branch || seen[node - 1]) throw ModelError("invalid or duplicate split node id");
    seen[node - 1] = true;
    SplitRule& s = tree.splits[node - 1];
    s.kind = parse_kind(field<std::string>(e, "kind"));
    if (s.kind == SplitRule::Kind::univariate) s.feature = field<std::size_t>(e, "feature");
    if (s.kind == SplitRule::Kind::multivariate) s.weights = field<std::vector<double>>(e, "weights");
    if (s.active()) s.threshold = field<double>(e, "threshold");
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) throw ModelError("model file lacks some split nodes");

  const std::size_t first = std::size_t{1} << tree.depth;
  tree.leaves.assign(first, LeafModel{});
  std::vector<bool> seen_leaf(first, false);
  for (const auto& e : j.at("leaves")) {
    const auto node = field<std::size_t>(e, "node");
    if (node < first || node >= 2 * first || seen_leaf[node - first]) throw ModelError("invalid or duplicate leaf id");
    seen_leaf[node - first] = true;
    tree.leaves[node - first].weights = field<std::vector<std::vector<double>>>(e, "weights");
    tree.leaves[node - first].intercepts = field<std::vector<double>>(e, "intercepts");
  }
  if (std::find(seen_leaf.begin(), seen_leaf.end(), false) != seen_leaf.end()) {
    throw ModelError("model file lacks some leaves");
  }

  if (j.contains("provenance")) {
    const json& p = j.at("provenance");
    tree.provenance.status = p.value("status", "");
    tree.provenance.objective = p.value("objective", 0.0);
    tree.provenance.best_bound = p.value("best_bound", 0.0);
    tree.provenance.gap = p.value("gap", 0.0);
    tree.provenance.wall_seconds = p.value("wall_seconds", 0.0);
    tree.provenance.nodes = p.value("nodes", std::size_t{0});
  }
  tree.validate();
  return tree;
}

void save_model(const ModelTree& tree, const std::filesystem::path& path) {
  tree.validate();
  std::ofstream out(path);
  if (!out) throw Error("cannot write model file: " + path.string());
  out << to_json(tree);
  if (!out) throw Error("failed while writing model file: " + path.string());
}

ModelTree load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read model file: " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return model_from_json(text.str());
}

}  // namespace optree
