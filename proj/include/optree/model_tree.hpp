#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "optree/data.hpp"
#include "optree/topology.hpp"

namespace optree {

inline constexpr const char* kModelSchema = "optree-model/v1";

struct SplitRule {
  enum class Kind { pass_right, univariate, multivariate };

  Kind kind = Kind::pass_right;
  std::size_t feature = 0;      // univariate: encoded feature index
  std::vector<double> weights;  // multivariate: one weight per encoded feature
  double threshold = 0.0;

  static SplitRule pass_right() { return {}; }
  static SplitRule univariate(std::size_t feature, double threshold) {
    return {Kind::univariate, feature, {}, threshold};
  }
  static SplitRule multivariate(std::vector<double> weights, double threshold) {
    return {Kind::multivariate, 0, std::move(weights), threshold};
  }
  bool active() const { return kind != Kind::pass_right; }
};

// One linear model per class for multiclass trees, otherwise a single one.
// Weights are indexed like ModelTree::leaf_features.
struct LeafModel {
  std::vector<std::vector<double>> weights;
  std::vector<double> intercepts;
};

struct TreeConstants {
  double c = 1.0;
  unsigned max_splits = 0;
  bool multivariate = false;
  std::vector<double> mu;  // per encoded feature, univariate only
  double m_split = 0.0;
  double m_svm = 0.0;
};

// How the tree was obtained; timed-out solves still produce trees.
struct Provenance {
  std::string status;
  double objective = 0.0;
  double best_bound = 0.0;
  double gap = 0.0;
  double wall_seconds = 0.0;
  std::size_t nodes = 0;
};

struct Prediction {
  double value = 0.0;  // regression output or winning score
  int class_index = -1;
  NodeId leaf = 0;
};

class ModelTree {
 public:
  unsigned depth = 0;
  Task task = Task::regression;
  std::size_t num_features = 0;
  std::vector<std::string> feature_names;
  std::vector<std::size_t> split_features;
  std::vector<std::size_t> leaf_features;
  std::vector<SplitRule> splits;  // branch node n at index n - 1
  std::vector<LeafModel> leaves;  // leaf n at index n - 2^depth
  PreprocessParams preprocess;
  TreeConstants constants;
  Provenance provenance;

  TreeTopology topology() const { return TreeTopology(depth); }
  int num_classes() const { return task == Task::multiclass ? static_cast<int>(preprocess.schema.class_labels.size()) : 2; }

  // Routes a standardized, encoded feature vector. Left iff x_f < b
  // (univariate) or a.x < b (multivariate); pass-right nodes go right.
  NodeId route(std::span<const double> x) const;
  // Per-class scores (one entry for regression/binary) at the given leaf.
  std::vector<double> leaf_scores(NodeId leaf, std::span<const double> x) const;
  // Prediction for a standardized, encoded vector. Binary: score >= 0 is
  // class 1. Multiclass: highest score, lowest index on ties.
  Prediction predict_standardized(std::span<const double> x) const;
  // Prediction for raw cells in source column order (label excluded).
  // Unknown categories encode as all-zero indicators and set *unknown.
  Prediction predict(std::span<const std::string> cells, bool* unknown = nullptr) const;
  // Class label token for classification, or the numeric value formatted
  // with round-trip precision for regression.
  std::string format_prediction(const Prediction& p) const;

  // Leaves reachable by some input once pass-right chains collapse.
  std::size_t count_leaves() const;
  std::vector<NodeId> reachable_leaves() const;
  std::size_t count_splits() const;

  // Throws ModelError on structural problems.
  void validate() const;
};

std::string to_json(const ModelTree& tree);
ModelTree model_from_json(const std::string& text);
void save_model(const ModelTree& tree, const std::filesystem::path& path);
ModelTree load_model(const std::filesystem::path& path);

}  // namespace optree
