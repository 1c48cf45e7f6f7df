#include "optree/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <set>

#include "optree/error.hpp"

namespace optree {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// Splits one logical CSV record; quoted fields may contain separators,
// doubled quotes and line breaks (continued from `in`).
bool read_record(std::istream& in, std::vector<std::string>& out, std::size_t& line_no) {
  out.clear();
  std::string line;
  if (!std::getline(in, line)) return false;
  ++line_no;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t pos = 0;;) {
    if (pos == line.size()) {
      if (quoted) {
        std::string next;
        if (!std::getline(in, next)) throw DataError("unterminated quoted field at line " + std::to_string(line_no));
        ++line_no;
        field.push_back('\n');
        line = std::move(next);
        pos = 0;
        continue;
      }
      break;
    }
    const char c = line[pos++];
    if (quoted) {
      if (c == '"') {
        if (pos < line.size() && line[pos] == '"') {
          field.push_back('"');
          ++pos;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      out.push_back(was_quoted ? field : trim(field));
      field.clear();
      was_quoted = false;
    } else {
      field.push_back(c);
    }
  }
  out.push_back(was_quoted ? field : trim(field));
  return true;
}

bool is_blank_record(const std::vector<std::string>& rec) {
  return rec.size() == 1 && rec[0].empty();
}

std::optional<double> parse_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

bool is_missing(const std::string& cell) { return cell.empty() || cell == "?" || cell == "NA"; }

RawTable parse_impl(std::istream& in, std::optional<std::string_view> label) {
  RawTable table;
  std::size_t line_no = 0;
  std::vector<std::string> rec;
  if (!read_record(in, rec, line_no) || is_blank_record(rec)) throw DataError("empty table: missing header row");
  table.columns = rec;
  if (label) {
    const auto hits = std::count(table.columns.begin(), table.columns.end(), *label);
    if (hits == 0) throw DataError("label column '" + std::string(*label) + "' not found in header");
    if (hits > 1) throw DataError("label column '" + std::string(*label) + "' appears more than once");
    table.label = std::string(*label);
    table.label_index = static_cast<std::size_t>(
        std::find(table.columns.begin(), table.columns.end(), *label) - table.columns.begin());
  }
  while (read_record(in, rec, line_no)) {
    if (is_blank_record(rec)) continue;
    if (rec.size() != table.columns.size()) {
      throw DataError("ragged row at line " + std::to_string(line_no) + ": expected " +
                      std::to_string(table.columns.size()) + " cells, found " + std::to_string(rec.size()));
    }
    for (std::size_t c = 0; c < rec.size(); ++c) {
      if (is_missing(rec[c])) {
        throw DataError("missing value in column '" + table.columns[c] + "' at line " + std::to_string(line_no));
      }
    }
    table.rows.push_back(rec);
  }
  if (table.rows.empty()) throw DataError("empty table: no data rows");
  return table;
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path.string());
  return in;
}

// Uniform integer in [0, bound) from a 64-bit engine, by rejection; fixed
// across standard libraries unlike std::uniform_int_distribution.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t draw = rng();
  while (draw >= limit) draw = rng();
  return draw % bound;
}

}  // namespace

std::string_view to_string(Task task) {
  switch (task) {
    case Task::regression:
      return "regression";
    case Task::binary:
      return "binary";
    case Task::multiclass:
      return "multiclass";
  }
  return "regression";
}

std::optional<Task> parse_task(std::string_view text) {
  if (text == "regression") return Task::regression;
  if (text == "binary") return Task::binary;
  if (text == "multiclass") return Task::multiclass;
  if (text == "classification") return Task::multiclass;
  return std::nullopt;
}

RawTable parse_csv(std::istream& in, std::string_view label) { return parse_impl(in, label); }

RawTable load_csv(const std::filesystem::path& path, std::string_view label) {
  auto in = open_or_throw(path);
  return parse_impl(in, label);
}

RawTable load_csv_unlabeled(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  auto table = parse_impl(in, std::nullopt);
  table.label_index = table.columns.size();
  return table;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.task = task;
  out.cols = cols;
  out.classes = classes;
  out.feature_names = feature_names;
  out.origins = origins;
  out.rows = indices.size();
  out.x.reserve(indices.size() * cols);
  for (const auto i : indices) {
    const auto r = row(i);
    out.x.insert(out.x.end(), r.begin(), r.end());
    if (!target.empty()) out.target.push_back(target[i]);
    if (!label.empty()) out.label.push_back(label[i]);
  }
  return out;
}

Dataset Dataset::concat(const Dataset& other) const {
  if (other.cols != cols) throw DataError("cannot concatenate datasets with different column counts");
  Dataset out = *this;
  out.rows += other.rows;
  out.x.insert(out.x.end(), other.x.begin(), other.x.end());
  out.target.insert(out.target.end(), other.target.begin(), other.target.end());
  out.label.insert(out.label.end(), other.label.begin(), other.label.end());
  return out;
}

Encoded encode(const RawTable& table, Task task) {
  if (table.rows.empty()) throw DataError("cannot encode an empty table");
  Encoded result;
  Schema& schema = result.schema;
  schema.label = table.label;
  schema.task = task;

  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (c == table.label_index) continue;
    SourceColumn col;
    col.name = table.columns[c];
    for (const auto& row : table.rows) {
      if (!parse_number(row[c])) {
        col.categorical = true;
        break;
      }
    }
    if (col.categorical) {
      std::set<std::string> cats;
      for (const auto& row : table.rows) cats.insert(row[c]);
      col.categories.assign(cats.begin(), cats.end());
    }
    schema.columns.push_back(std::move(col));
  }

  if (is_classification(task)) {
    std::set<std::string> labels;
    for (const auto& row : table.rows) labels.insert(row[table.label_index]);
    if (labels.size() < 2) throw DataError("classification requires at least two distinct labels");
    schema.class_labels.assign(labels.begin(), labels.end());
    if (labels.size() == 2) {
      schema.task = Task::binary;
    } else if (task == Task::binary) {
      throw DataError("binary task but " + std::to_string(labels.size()) + " distinct labels found");
    } else {
      schema.task = Task::multiclass;
    }
  }

  result.data = encode_with(table, schema);
  return result;
}

Dataset encode_with(const RawTable& table, const Schema& schema, std::size_t* unknown_cells) {
  Dataset data;
  data.task = schema.task;
  data.classes = schema.task == Task::regression ? 1 : static_cast<int>(schema.class_labels.size());

  // Map schema columns onto table columns by name.
  std::vector<std::size_t> where;
  for (std::size_t s = 0; s < schema.columns.size(); ++s) {
    const auto& col = schema.columns[s];
    const auto it = std::find(table.columns.begin(), table.columns.end(), col.name);
    if (it == table.columns.end()) throw DataError("column '" + col.name + "' missing from input");
    where.push_back(static_cast<std::size_t>(it - table.columns.begin()));
    if (col.categorical) {
      for (std::size_t k = 0; k < col.categories.size(); ++k) {
        data.feature_names.push_back(col.name + "=" + col.categories[k]);
        data.origins.push_back({s, k});
      }
    } else {
      data.feature_names.push_back(col.name);
      data.origins.push_back({s, std::nullopt});
    }
  }
  data.cols = data.feature_names.size();
  data.rows = table.rows.size();
  data.x.reserve(data.rows * data.cols);

  std::size_t unknown = 0;
  const bool has_label = table.label_index < table.columns.size() && table.columns[table.label_index] == schema.label;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    for (std::size_t s = 0; s < schema.columns.size(); ++s) {
      const auto& col = schema.columns[s];
      const auto& cell = row[where[s]];
      if (col.categorical) {
        const auto it = std::lower_bound(col.categories.begin(), col.categories.end(), cell);
        const bool known = it != col.categories.end() && *it == cell;
        if (!known) ++unknown;
        for (std::size_t k = 0; k < col.categories.size(); ++k) {
          data.x.push_back(known && static_cast<std::size_t>(it - col.categories.begin()) == k ? 1.0 : 0.0);
        }
      } else {
        const auto value = parse_number(cell);
        if (!value) {
          throw DataError("non-numeric value '" + cell + "' in numeric column '" + col.name + "' (row " +
                          std::to_string(r + 1) + ")");
        }
        data.x.push_back(*value);
      }
    }
    if (!has_label) continue;
    const auto& y = row[table.label_index];
    if (schema.task == Task::regression) {
      const auto value = parse_number(y);
      if (!value) throw DataError("regression label '" + y + "' is not numeric (row " + std::to_string(r + 1) + ")");
      data.target.push_back(*value);
    } else {
      const auto it = std::lower_bound(schema.class_labels.begin(), schema.class_labels.end(), y);
      if (it == schema.class_labels.end() || *it != y) throw DataError("unknown class label '" + y + "'");
      data.label.push_back(static_cast<int>(it - schema.class_labels.begin()));
    }
  }
  if (unknown_cells != nullptr) *unknown_cells = unknown;
  return data;
}

std::vector<double> encode_row(const Schema& schema, std::span<const std::string> cells, bool* unknown) {
  if (cells.size() != schema.columns.size()) {
    throw DataError("expected " + std::to_string(schema.columns.size()) + " feature cells, got " +
                    std::to_string(cells.size()));
  }
  std::vector<double> out;
  bool saw_unknown = false;
  for (std::size_t s = 0; s < schema.columns.size(); ++s) {
    const auto& col = schema.columns[s];
    if (col.categorical) {
      const auto it = std::lower_bound(col.categories.begin(), col.categories.end(), cells[s]);
      const bool known = it != col.categories.end() && *it == cells[s];
      saw_unknown |= !known;
      for (std::size_t k = 0; k < col.categories.size(); ++k) {
        out.push_back(known && static_cast<std::size_t>(it - col.categories.begin()) == k ? 1.0 : 0.0);
      }
    } else {
      const auto value = parse_number(cells[s]);
      if (!value) throw DataError("non-numeric value '" + cells[s] + "' for column '" + col.name + "'");
      out.push_back(*value);
    }
  }
  if (unknown != nullptr) *unknown = saw_unknown;
  return out;
}

Standardization fit_standardize(const Dataset& data) {
  if (data.empty()) throw DataError("cannot fit standardization on an empty dataset");
  Standardization params;
  params.mean.assign(data.cols, 0.0);
  params.stddev.assign(data.cols, 1.0);
  params.constant.assign(data.cols, false);
  const double n = static_cast<double>(data.rows);
  for (std::size_t f = 0; f < data.cols; ++f) {
    double sum = 0.0;
    for (std::size_t i = 0; i < data.rows; ++i) sum += data.at(i, f);
    const double mean = sum / n;
    double ss = 0.0;
    bool constant = true;
    for (std::size_t i = 0; i < data.rows; ++i) {
      const double v = data.at(i, f);
      ss += (v - mean) * (v - mean);
      constant &= v == data.at(0, f);
    }
    params.mean[f] = mean;
    const double sd = std::sqrt(ss / n);
    if (constant || !(sd > 0.0)) {
      params.constant[f] = true;
      params.stddev[f] = 1.0;
    } else {
      params.stddev[f] = sd;
    }
  }
  return params;
}

void standardize_row(std::span<double> row, const Standardization& params) {
  if (row.size() != params.size()) {
    throw DataError("standardization expects " + std::to_string(params.size()) + " columns, got " +
                    std::to_string(row.size()));
  }
  for (std::size_t f = 0; f < row.size(); ++f) {
    row[f] = params.constant[f] ? 0.0 : (row[f] - params.mean[f]) / params.stddev[f];
  }
}

Dataset apply_standardize(const Dataset& data, const Standardization& params) {
  if (data.cols != params.size()) {
    throw DataError("standardization expects " + std::to_string(params.size()) + " columns, got " +
                    std::to_string(data.cols));
  }
  Dataset out = data;
  for (std::size_t i = 0; i < out.rows; ++i) standardize_row({out.x.data() + i * out.cols, out.cols}, params);
  return out;
}

SplitIndices split_indices(std::size_t n, const SplitSpec& spec) {
  if (n < 5) throw DataError("splitting requires at least 5 data points");
  const double props[] = {spec.train, spec.validation, spec.test};
  for (const double p : props) {
    if (!(p >= 0.0 && p < 1.0)) throw DataError("split proportions must lie in [0, 1)");
  }
  if (!(spec.train > 0.0)) throw DataError("training proportion must be positive");

  const auto n_test = static_cast<std::size_t>(std::llround(spec.test * static_cast<double>(n)));
  const std::size_t rest = n - std::min(n_test, n);
  const double val_share = spec.validation / (spec.train + spec.validation);
  const auto n_val = static_cast<std::size_t>(std::llround(val_share * static_cast<double>(rest)));
  const std::size_t n_train = rest - std::min(n_val, rest);
  if ((spec.test > 0.0 && n_test == 0) || (spec.validation > 0.0 && n_val == 0) || n_train == 0 ||
      n_test + n_val >= n) {
    throw DataError("split proportions leave an empty subset for " + std::to_string(n) + " points");
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(spec.seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[bounded(rng, i + 1)]);

  SplitIndices out;
  out.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  out.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test),
                        order.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
  out.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), order.end());
  return out;
}

Partition split(const Dataset& data, const SplitSpec& spec) {
  const auto idx = split_indices(data.rows, spec);
  return {data.subset(idx.train), data.subset(idx.validation), data.subset(idx.test)};
}

std::vector<bool> constant_features(const Dataset& data) {
  std::vector<bool> constant(data.cols, true);
  for (std::size_t f = 0; f < data.cols; ++f) {
    for (std::size_t i = 1; i < data.rows && constant[f]; ++i) constant[f] = data.at(i, f) == data.at(0, f);
  }
  return constant;
}

std::vector<double> feature_gaps(const Dataset& data) {
  std::vector<double> mu(data.cols, 1.0);
  std::vector<double> values(data.rows);
  for (std::size_t f = 0; f < data.cols; ++f) {
    for (std::size_t i = 0; i < data.rows; ++i) values[i] = data.at(i, f);
    std::sort(values.begin(), values.end());
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < values.size(); ++i) {
      if (values[i] != values[i - 1]) gap = std::min(gap, values[i] - values[i - 1]);
    }
    if (std::isfinite(gap)) mu[f] = gap;
  }
  return mu;
}

std::vector<std::size_t> resolve_features(const Dataset& data, const Schema& schema,
                                          std::span<const std::string> names) {
  std::set<std::size_t> picked;
  for (const auto& name : names) {
    bool found = false;
    for (std::size_t f = 0; f < data.cols; ++f) {
      const auto& origin = data.origins[f];
      if (data.feature_names[f] == name ||
          (origin.source < schema.columns.size() && schema.columns[origin.source].name == name)) {
        picked.insert(f);
        found = true;
      }
    }
    if (!found) throw DataError("unknown feature name '" + name + "'");
  }
  return {picked.begin(), picked.end()};
}

}  // namespace optree
