#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace optree {

enum class Task { regression, binary, multiclass };

std::string_view to_string(Task task);
// Accepts "regression", "binary", "multiclass" and "classification" (resolved
// to binary or multiclass from the number of distinct labels at encode time).
std::optional<Task> parse_task(std::string_view text);
inline bool is_classification(Task task) { return task != Task::regression; }

// Untyped CSV contents with the label column identified.
struct RawTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::string label;
  std::size_t label_index = 0;

  std::size_t size() const { return rows.size(); }
};

RawTable parse_csv(std::istream& in, std::string_view label);
RawTable load_csv(const std::filesystem::path& path, std::string_view label);
// Label-free variant used at prediction time: every column is a feature.
RawTable load_csv_unlabeled(const std::filesystem::path& path);

// A source (pre-encoding) feature column. Categorical columns expand to one
// indicator per category, in lexicographic category order.
struct SourceColumn {
  std::string name;
  bool categorical = false;
  std::vector<std::string> categories;
};

// Where an encoded feature column came from.
struct FeatureOrigin {
  std::size_t source = 0;
  std::optional<std::size_t> category;  // set for one-hot indicators
};

// Everything needed to turn a raw row into the encoded feature space.
struct Schema {
  std::string label;
  Task task = Task::regression;
  std::vector<SourceColumn> columns;
  std::vector<std::string> class_labels;  // sorted; empty for regression
};

// Per encoded column. Constant columns keep stddev 1 and map to 0.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> constant;

  std::size_t size() const { return mean.size(); }
};

struct PreprocessParams {
  Schema schema;
  Standardization scaling;
};

struct Dataset {
  Task task = Task::regression;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> x;       // row-major rows x cols
  std::vector<double> target;  // regression targets
  std::vector<int> label;      // class indices for classification
  int classes = 1;
  std::vector<std::string> feature_names;
  std::vector<FeatureOrigin> origins;

  double at(std::size_t i, std::size_t f) const { return x[i * cols + f]; }
  std::span<const double> row(std::size_t i) const { return {x.data() + i * cols, cols}; }
  bool empty() const { return rows == 0; }

  // Rows in the given order; metadata is shared.
  Dataset subset(std::span<const std::size_t> indices) const;
  // Same schema, rows of `other` appended after this one's.
  Dataset concat(const Dataset& other) const;
};

struct Encoded {
  Dataset data;
  Schema schema;
};

// One-hot encodes categorical columns and maps labels. No scaling.
Encoded encode(const RawTable& table, Task task);
// Encodes with an existing schema (test data, prediction). When the table
// has no label column, targets/labels stay empty. Unknown categories become
// all-zero indicators; `unknown_cells` counts them when non-null.
Dataset encode_with(const RawTable& table, const Schema& schema, std::size_t* unknown_cells = nullptr);
// Encodes a single raw feature row (label excluded) in schema column order.
std::vector<double> encode_row(const Schema& schema, std::span<const std::string> cells, bool* unknown = nullptr);

Standardization fit_standardize(const Dataset& data);
Dataset apply_standardize(const Dataset& data, const Standardization& params);
void standardize_row(std::span<double> row, const Standardization& params);

struct SplitSpec {
  std::uint64_t seed = 0;
  double train = 0.8;
  double validation = 0.0;
  double test = 0.2;
};

struct SplitIndices {
  std::vector<std::size_t> train, validation, test;
};

// The test share is taken from the whole set; validation is then carved from
// the remainder in the ratio validation:(train+validation). For proportions
// summing to one this equals the direct split; (0.8, 0.2, 0.2) gives the
// nested 64/16/20 layout.
SplitIndices split_indices(std::size_t n, const SplitSpec& spec);

struct Partition {
  Dataset train, validation, test;
};
Partition split(const Dataset& data, const SplitSpec& spec);

// Smallest nonzero gap between two values of each feature. Constant
// features get 1 and are reported by `constant_features`.
std::vector<double> feature_gaps(const Dataset& data);
std::vector<bool> constant_features(const Dataset& data);

// Resolves names (source column names or encoded feature names) to encoded
// column indices, in ascending order without duplicates.
std::vector<std::size_t> resolve_features(const Dataset& data, const Schema& schema,
                                          std::span<const std::string> names);

}  // namespace optree
