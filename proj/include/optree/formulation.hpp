#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "optree/bnb.hpp"
#include "optree/data.hpp"
#include "optree/milp_model.hpp"
#include "optree/model_tree.hpp"
#include "optree/topology.hpp"

namespace optree {

// Encoded feature indices. Constant features in `split` are dropped at
// build time.
struct FeatureRoles {
  std::vector<std::size_t> split;
  std::vector<std::size_t> leaf;
};

// Every feature in both roles.
FeatureRoles default_roles(const Dataset& data);

struct FormulationSpec {
  unsigned depth = 0;
  unsigned max_splits = 0;
  double c = 1.0;
  bool multivariate = false;
  FeatureRoles roles;
  double m_svm = 1e4;
  double multivariate_mu = 1e-3;
  double multivariate_m = 1e4;
};

// Symbol -> variable maps. Branch-indexed vectors use TreeTopology::branch_index,
// leaf-indexed ones TreeTopology::leaf_index, feature positions index into
// split_features / leaf_features.
struct VariableLayout {
  std::vector<std::size_t> split_features;
  std::vector<std::size_t> leaf_features;

  std::vector<VarRef> d;                    // [branch]
  std::vector<std::vector<VarRef>> a;       // [branch][split pos]
  std::vector<std::vector<VarRef>> s;       // [branch][split pos], multivariate
  std::vector<std::vector<VarRef>> a_abs;   // [branch][split pos], multivariate
  std::vector<VarRef> b;                    // [branch]
  std::vector<std::vector<VarRef>> z;       // [point][leaf]
  std::vector<VarRef> l;                    // [leaf]
  std::vector<std::vector<std::vector<VarRef>>> beta;      // [leaf][class][leaf pos]
  std::vector<std::vector<std::vector<VarRef>>> beta_abs;  // [leaf][class][leaf pos]
  std::vector<std::vector<VarRef>> delta;                  // [leaf][class]
  // [leaf][point][class]; one class slot for regression and binary. For
  // regression the variable holds |eps|. Multiclass has no slot for k == y_i.
  std::vector<std::vector<std::vector<std::optional<VarRef>>>> eps;
};

struct Formulation {
  Task task = Task::regression;
  int classes = 1;  // models per leaf: K for multiclass, otherwise 1
  TreeTopology topology{0};
  FormulationSpec spec;
  TreeConstants constants;
  MilpModel model;
  VariableLayout layout;
};

// Regression tree with absolute-error SVM leaves.
Formulation build_ormt(const Dataset& data, const FormulationSpec& spec);
// Binary classification with hinge-loss SVM leaves; class index 1 is +1.
Formulation build_ocmt_binary(const Dataset& data, const FormulationSpec& spec);
// Weston-Watkins multiclass SVM leaves, K >= 3.
Formulation build_ocmt_multiclass(const Dataset& data, const FormulationSpec& spec);
// Dispatches on data.task.
Formulation build_formulation(const Dataset& data, const FormulationSpec& spec);

// Splits of a tree over the formulation's split features, before the
// threshold variables are fitted to the data.
struct TreeStructure {
  std::vector<bool> active;                  // [branch]
  std::vector<std::size_t> feature;          // [branch] split position, univariate
  std::vector<std::vector<double>> weights;  // [branch][split pos], multivariate
  std::vector<double> threshold;             // [branch] left iff value < threshold
};

TreeStructure structure_from_tree(const Formulation& f, const ModelTree& tree);

// Routes the data through `structure`, drops splits that leave a side empty
// (with their subtrees), fits every leaf SVM by LP and returns a full
// assignment. nullopt when the structure cannot be expressed (for instance a
// multivariate margin below mu).
std::optional<std::vector<double>> complete_assignment(const Formulation& f, const Dataset& data,
                                                       TreeStructure structure);
std::optional<std::vector<double>> assignment_from_tree(const Formulation& f, const Dataset& data,
                                                        const ModelTree& tree);

// Primal heuristic for branch and bound: reads a structure off the LP values
// and completes it. The first call also offers a greedy top-down tree, the
// no-split tree and `seeds`.
IncumbentHeuristic make_tree_heuristic(const Formulation& f, const Dataset& data,
                                       std::vector<TreeStructure> seeds = {});

// Reads the tree from a solver assignment. Univariate thresholds are moved to
// the midpoint between the two training values around b.
ModelTree extract_tree(const Formulation& f, std::span<const double> assignment, const Dataset& data,
                       const PreprocessParams& preprocess);

// Objective of the formulation recomputed from the tree by routing every
// point: sum |beta| + C * (absolute residuals or hinge losses).
double training_objective(const ModelTree& tree, const Dataset& data, double c);

struct TrainOptions {
  FormulationSpec spec;
  double time_limit = 3600.0;
  double relative_gap = 1e-6;
  std::optional<std::size_t> node_limit;
  std::optional<std::vector<double>> warm_start;
  const ModelTree* warm_tree = nullptr;  // structure offered to the heuristic
  bool verbose = false;
};

struct TrainResult {
  std::optional<ModelTree> tree;  // absent when no feasible solution was found
  SolveOutcome outcome;
};

TrainResult train_tree(const Dataset& data, const PreprocessParams& preprocess, const TrainOptions& options);

}  // namespace optree
