#include "optree/cli.hpp"

#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include "CLI11.hpp"
#include "optree/data.hpp"
#include "optree/error.hpp"
#include "optree/evaluation.hpp"
#include "optree/formulation.hpp"
#include "optree/log.hpp"
#include "optree/milp_model.hpp"
#include "optree/model_tree.hpp"
#include "optree/tuner.hpp"

namespace optree::cli {
namespace {

struct Invocation {
  std::string data;
  std::string label;
  std::string task;
  std::string model_in;
  std::string model_out;
  std::string trace_out = "-";
  std::string report_out;
  std::string out = "-";
  std::string format = "table";
  unsigned depth = 2;
  int splits = -1;
  double c = 1.0;
  std::vector<double> c_grid{0.1, 1.0, 10.0, 100.0};
  unsigned max_depth = 2;
  double time_limit = 3600.0;
  std::uint64_t seed = 0;
  double validation = 0.2;
  double test = 0.2;
  std::size_t runs = 30;
  unsigned jobs = 1;
  bool multivariate = false;
  std::vector<std::string> split_features;
  std::vector<std::string> leaf_features;
};

const std::vector<std::string> kTasks{"regression", "binary", "multiclass", "classification"};

void add_dataset(CLI::App* sc, Invocation& inv, bool with_task) {
  sc->add_option("--data", inv.data, "Input CSV with a header row")->required()->check(CLI::ExistingFile);
  sc->add_option("--label", inv.label, "Name of the label column")->required();
  if (with_task) {
    sc->add_option("--task", inv.task, "regression, binary, multiclass or classification")
        ->required()
        ->check(CLI::IsMember(kTasks));
  }
}

void add_roles(CLI::App* sc, Invocation& inv) {
  sc->add_option("--split-features", inv.split_features, "Comma-separated columns allowed in splits")
      ->delimiter(',')
      ->default_str("all");
  sc->add_option("--leaf-features", inv.leaf_features, "Comma-separated columns used by the leaf SVMs")
      ->delimiter(',')
      ->default_str("all");
  sc->add_flag("--multivariate", inv.multivariate, "Hyperplane splits instead of single-feature splits");
}

void add_tree_shape(CLI::App* sc, Invocation& inv) {
  sc->add_option("--depth", inv.depth, "Tree depth D")->check(CLI::Range(0u, TreeTopology::kMaxDepth));
  sc->add_option("--splits", inv.splits, "Maximum number of splits S")
      ->check(CLI::NonNegativeNumber)
      ->default_str("2^D - 1");
  sc->add_option("--C", inv.c, "SVM loss weight")->check(CLI::PositiveNumber);
  add_roles(sc, inv);
}

void add_search(CLI::App* sc, Invocation& inv) {
  sc->add_option("--max-depth", inv.max_depth, "Largest depth in the schedule")
      ->check(CLI::Range(0u, TreeTopology::kMaxDepth));
  sc->add_option("--C-grid", inv.c_grid, "Comma-separated C values")->delimiter(',')->check(CLI::PositiveNumber);
  sc->add_option("--seed", inv.seed, "Seed for the data splits");
  sc->add_option("--jobs", inv.jobs, "Parallel workers")->check(CLI::Range(1u, 256u));
  add_roles(sc, inv);
}

void add_time_limit(CLI::App* sc, Invocation& inv) {
  sc->add_option("--time-limit", inv.time_limit, "Seconds per MILP solve")->check(CLI::PositiveNumber);
}

std::unique_ptr<CLI::App> make_app(Invocation& inv) {
  auto app = std::make_unique<CLI::App>("Globally optimal model trees with linear SVM leaves", "optree");
  app->option_defaults()->always_capture_default();
  app->require_subcommand(1);
  app->set_version_flag("--version", "optree 1.0");

  auto* train = app->add_subcommand("train", "Solve one tree at fixed D, S and C");
  add_dataset(train, inv, true);
  add_tree_shape(train, inv);
  add_time_limit(train, inv);
  train->add_option("--model-out", inv.model_out, "Where to write the model JSON")->required();

  auto* tune = app->add_subcommand("tune", "Search D, S and C on a validation split, then retrain on all data");
  add_dataset(tune, inv, true);
  add_search(tune, inv);
  add_time_limit(tune, inv);
  tune->add_option("--validation", inv.validation, "Share of rows held out for validation")
      ->check(CLI::Range(0.0, 0.95));
  tune->add_option("--model-out", inv.model_out, "Where to write the model JSON")->required();
  tune->add_option("--trace-out", inv.trace_out, "Tuning trace CSV, - for standard output");

  auto* predict = app->add_subcommand("predict", "Print one prediction per input row");
  predict->add_option("--model", inv.model_in, "Model JSON")->required()->check(CLI::ExistingFile);
  predict->add_option("--data", inv.data, "Input CSV; a label column is ignored")
      ->required()
      ->check(CLI::ExistingFile);

  auto* evaluate = app->add_subcommand("evaluate", "Score a model on labelled data");
  evaluate->add_option("--model", inv.model_in, "Model JSON")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--data", inv.data, "Input CSV containing the model's label column")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--format", inv.format, "json or table")->check(CLI::IsMember({"json", "table"}));

  auto* experiment = app->add_subcommand("experiment", "Repeated train/validation/test protocol");
  add_dataset(experiment, inv, true);
  add_search(experiment, inv);
  add_time_limit(experiment, inv);
  experiment->add_option("--runs", inv.runs, "Number of random splits")->check(CLI::Range(1u, 100000u));
  experiment->add_option("--test", inv.test, "Share of rows held out for testing")->check(CLI::Range(0.01, 0.95));
  experiment->add_option("--validation", inv.validation, "Share of the training part held out for validation")
      ->check(CLI::Range(0.01, 0.95));
  experiment->add_option("--format", inv.format, "json or table")->check(CLI::IsMember({"json", "table"}));
  experiment->add_option("--report-out", inv.report_out, "Also write the JSON report here")->default_str("none");

  auto* export_lp = app->add_subcommand("export-lp", "Write the MILP in CPLEX LP format");
  add_dataset(export_lp, inv, true);
  add_tree_shape(export_lp, inv);
  export_lp->add_option("--out", inv.out, "LP file, - for standard output");
  return app;
}

Encoded load_training(const Invocation& inv) {
  const auto task = parse_task(inv.task);
  if (!task) throw DataError("unknown task '" + inv.task + "'");
  return encode(load_csv(inv.data, inv.label), *task);
}

std::optional<FeatureRoles> roles_for(const Invocation& inv, const Encoded& enc) {
  if (inv.split_features.empty() && inv.leaf_features.empty()) return std::nullopt;
  auto roles = default_roles(enc.data);
  if (!inv.split_features.empty()) roles.split = resolve_features(enc.data, enc.schema, inv.split_features);
  if (!inv.leaf_features.empty()) roles.leaf = resolve_features(enc.data, enc.schema, inv.leaf_features);
  return roles;
}

FormulationSpec tree_spec(const Invocation& inv, const Encoded& enc) {
  FormulationSpec spec;
  spec.depth = inv.depth;
  spec.max_splits = inv.splits < 0 ? (1u << inv.depth) - 1 : static_cast<unsigned>(inv.splits);
  spec.c = inv.c;
  spec.multivariate = inv.multivariate;
  const auto roles = roles_for(inv, enc);
  spec.roles = roles ? *roles : default_roles(enc.data);
  return spec;
}

TunerConfig tuner_config(const Invocation& inv, const Encoded& enc) {
  TunerConfig cfg;
  cfg.max_depth = inv.max_depth;
  cfg.c_grid = inv.c_grid;
  cfg.time_limit = inv.time_limit;
  cfg.multivariate = inv.multivariate;
  cfg.roles = roles_for(inv, enc);
  cfg.seed = inv.seed;
  cfg.jobs = inv.jobs;
  return cfg;
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path == "-") {
    out << text;
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot write '" + path + "'");
  file << text;
}

int cmd_train(const Invocation& inv, std::ostream& out) {
  const auto enc = load_training(inv);
  PreprocessParams pre{enc.schema, fit_standardize(enc.data)};
  const auto data = apply_standardize(enc.data, pre.scaling);
  TrainOptions options;
  options.spec = tree_spec(inv, enc);
  options.time_limit = inv.time_limit;
  const auto result = train_tree(data, pre, options);
  if (!result.tree) throw NoSolutionError("no feasible tree found within the time limit");
  save_model(*result.tree, inv.model_out);
  out << "status " << result.tree->provenance.status << "\nobjective " << result.tree->provenance.objective
      << "\ngap " << result.tree->provenance.gap << "\nleaves " << result.tree->count_leaves() << '\n';
  return kOk;
}

int cmd_tune(const Invocation& inv, std::ostream& out) {
  const auto enc = load_training(inv);
  Dataset train = enc.data, val;
  if (inv.validation > 0.0) {
    const auto parts = split(enc.data, {inv.seed, 1.0 - inv.validation, inv.validation, 0.0});
    train = parts.train;
    val = parts.validation;
  }
  // The final tree is fitted on both parts, so the scaling is too.
  PreprocessParams pre{enc.schema, fit_standardize(enc.data)};
  const auto result =
      tune(apply_standardize(train, pre.scaling), apply_standardize(val, pre.scaling), pre, tuner_config(inv, enc));
  save_model(result.tree, inv.model_out);
  write_text(inv.trace_out, trace_csv(result.trace), out);
  return kOk;
}

int cmd_predict(const Invocation& inv, std::ostream& out, std::ostream& err) {
  const auto tree = load_model(inv.model_in);
  std::size_t unknown = 0;
  const auto data = encode_with(load_csv_unlabeled(inv.data), tree.preprocess.schema, &unknown);
  if (data.cols != tree.num_features) throw DataError("input does not match the model's features");
  const auto scaled = apply_standardize(data, tree.preprocess.scaling);
  for (std::size_t i = 0; i < scaled.rows; ++i) out << tree.format_prediction(tree.predict_standardized(scaled.row(i))) << '\n';
  if (unknown > 0) err << "warning: " << unknown << " cells held categories unseen in training\n";
  return kOk;
}

int cmd_evaluate(const Invocation& inv, std::ostream& out) {
  const auto tree = load_model(inv.model_in);
  const auto& schema = tree.preprocess.schema;
  const auto data = encode_with(load_csv(inv.data, schema.label), schema);
  const auto report = evaluate_tree(tree, data);
  out << (inv.format == "json" ? metrics_json(report) : metrics_table(report));
  return kOk;
}

int cmd_experiment(const Invocation& inv, std::ostream& out) {
  const auto enc = load_training(inv);
  ExperimentConfig cfg;
  cfg.runs = inv.runs;
  cfg.base_seed = inv.seed;
  cfg.test_share = inv.test;
  cfg.validation_share = inv.validation;
  cfg.tuner = tuner_config(inv, enc);
  // Parallelism goes to whole runs; each run tunes sequentially.
  cfg.jobs = inv.jobs;
  cfg.tuner.jobs = 1;
  const auto report = run_experiment(enc, cfg);
  if (!inv.report_out.empty()) write_text(inv.report_out, report_json(report), out);
  out << (inv.format == "json" ? report_json(report) : report_table(report));
  for (const auto& r : report.runs) {
    if (r.completed) return kOk;
  }
  throw NoSolutionError("no run finished");
}

int cmd_export_lp(const Invocation& inv, std::ostream& out) {
  const auto enc = load_training(inv);
  const auto data = apply_standardize(enc.data, fit_standardize(enc.data));
  const auto f = build_formulation(data, tree_spec(inv, enc));
  if (inv.out == "-") {
    export_lp(f.model, out);
  } else {
    export_lp(f.model, std::filesystem::path(inv.out));
  }
  return kOk;
}

int dispatch(CLI::App& app, const Invocation& inv, std::ostream& out, std::ostream& err) {
  if (app.got_subcommand("train")) return cmd_train(inv, out);
  if (app.got_subcommand("tune")) return cmd_tune(inv, out);
  if (app.got_subcommand("predict")) return cmd_predict(inv, out, err);
  if (app.got_subcommand("evaluate")) return cmd_evaluate(inv, out);
  if (app.got_subcommand("experiment")) return cmd_experiment(inv, out);
  return cmd_export_lp(inv, out);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Invocation inv;
  auto app = make_app(inv);
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app->parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app->exit(e, out, err) == 0 ? kOk : kUsage;
  }
  try {
    return dispatch(*app, inv, out, err);
  } catch (const NoSolutionError& e) {
    err << "error: " << e.what() << '\n';
    return kNoSolution;
  } catch (const SolverError& e) {
    err << "solver error: " << e.what() << '\n';
    return kNoSolution;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

std::vector<FlagInfo> flag_registry() {
  Invocation inv;
  auto app = make_app(inv);
  std::vector<FlagInfo> out;
  for (const auto* sc : app->get_subcommands({})) {
    for (const auto* opt : sc->get_options()) {
      if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
      FlagInfo info;
      info.command = sc->get_name();
      info.name = "--" + opt->get_lnames().front();
      info.required = opt->get_required();
      info.is_switch = opt->get_expected_max() == 0;
      if (!info.required && !info.is_switch) info.default_value = opt->get_default_str();
      out.push_back(std::move(info));
    }
  }
  return out;
}

std::vector<std::string> subcommands() {
  Invocation inv;
  auto app = make_app(inv);
  std::vector<std::string> out;
  for (const auto* sc : app->get_subcommands({})) out.push_back(sc->get_name());
  return out;
}

std::string help_text(const std::string& command) {
  Invocation inv;
  auto app = make_app(inv);
  return app->get_subcommand(command)->help();
}

}  // namespace optree::cli
