#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "optree/cli.hpp"
#include "optree/model_tree.hpp"

namespace optree::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code = -1;
  std::string out, err;
};

Result call(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Result r;
  r.code = run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("optree_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
    return path(name);
  }

  // y = |x| + 0.5 w with a categorical column that does not matter.
  std::string regression_csv(std::size_t n = 16) const {
    std::ostringstream csv;
    csv << "x,w,kind,y\n";
    for (std::size_t i = 0; i < n; ++i) {
      const double x = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
      const double w = static_cast<double>(i % 4) / 4.0;
      csv << x << ',' << w << ',' << (i % 2 ? "a" : "b") << ',' << std::abs(x) + 0.5 * w << '\n';
    }
    return write("reg.csv", csv.str());
  }

  std::string classification_csv() const {
    std::ostringstream csv;
    csv << "x,cls\n";
    for (int k = -6; k <= 6; ++k) csv << k / 6.0 << ',' << (k < 0 ? "neg" : "pos") << '\n';
    return write("cls.csv", csv.str());
  }

  fs::path dir_;
};

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(call({}).code, kUsage);
  EXPECT_EQ(call({"bogus"}).code, kUsage);
  const auto data = regression_csv();
  const auto r = call({"train", "--data", data, "--task", "regression", "--model-out", path("m.json")});
  EXPECT_EQ(r.code, kUsage);
  EXPECT_NE(r.err.find("--label"), std::string::npos);
  EXPECT_EQ(call({"train", "--data", data, "--label", "y", "--task", "regression", "--model-out", path("m.json"),
                  "--C", "-1"})
                .code,
            kUsage);
  EXPECT_EQ(call({"train", "--data", data, "--label", "y", "--task", "sideways", "--model-out", path("m.json")}).code,
            kUsage);
}

TEST_F(CliTest, HelpDocumentsEveryFlagWithItsDefault) {
  const auto registry = flag_registry();
  EXPECT_EQ(subcommands(), (std::vector<std::string>{"train", "tune", "predict", "evaluate", "experiment", "export-lp"}));
  std::size_t with_default = 0;
  for (const auto& flag : registry) {
    const auto help = help_text(flag.command);
    EXPECT_NE(help.find(flag.name), std::string::npos) << flag.command << ' ' << flag.name;
    if (flag.required || flag.is_switch) continue;
    EXPECT_FALSE(flag.default_value.empty()) << flag.command << ' ' << flag.name;
    EXPECT_NE(help.find(flag.default_value), std::string::npos) << flag.command << ' ' << flag.name;
    ++with_default;
  }
  EXPECT_GT(with_default, 10u);
  const auto r = call({"tune", "--help"});
  EXPECT_EQ(r.code, kOk);
  EXPECT_NE(r.out.find("--time-limit"), std::string::npos);
}

TEST_F(CliTest, DefaultsMirrorTheProtocol) {
  auto find = [&](const std::string& cmd, const std::string& name) {
    for (const auto& f : flag_registry()) {
      if (f.command == cmd && f.name == name) return f.default_value;
    }
    return std::string("missing");
  };
  EXPECT_EQ(find("tune", "--max-depth"), "2");
  EXPECT_EQ(find("tune", "--time-limit"), "3600");
  EXPECT_EQ(find("experiment", "--runs"), "30");
  const auto grid = find("experiment", "--C-grid");
  for (const char* c : {"0.1", "1", "10", "100"}) EXPECT_NE(grid.find(c), std::string::npos) << grid;
}

TEST_F(CliTest, TrainPredictIsReproducible) {
  const auto data = regression_csv();
  std::string first_model, first_pred;
  for (int round = 0; round < 2; ++round) {
    const auto model = path("m" + std::to_string(round) + ".json");
    const auto t = call({"train", "--data", data, "--label", "y", "--task", "regression", "--depth", "1", "--C", "10",
                         "--time-limit", "60", "--model-out", model});
    ASSERT_EQ(t.code, kOk) << t.err;
    EXPECT_NE(t.out.find("leaves"), std::string::npos);
    const auto p = call({"predict", "--model", model, "--data", data});
    ASSERT_EQ(p.code, kOk) << p.err;
    EXPECT_EQ(std::count(p.out.begin(), p.out.end(), '\n'), 16);

    auto j = nlohmann::json::parse(std::ifstream(model));
    j["provenance"].erase("wall_seconds");
    if (round == 0) {
      first_model = j.dump();
      first_pred = p.out;
    } else {
      EXPECT_EQ(j.dump(), first_model);
      EXPECT_EQ(p.out, first_pred);
    }
  }
}

TEST_F(CliTest, TuneWritesModelAndTrace) {
  const auto data = regression_csv(20);
  const auto model = path("m.json");
  const auto trace = path("trace.csv");
  const auto r = call({"tune", "--data", data, "--label", "y", "--task", "regression", "--max-depth", "1", "--C-grid",
                       "1,10", "--time-limit", "60", "--seed", "7", "--model-out", model, "--trace-out", trace});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto tree = load_model(model);
  EXPECT_LE(tree.count_leaves(), 2u);
  std::ifstream in(trace);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "D,S,C,status,gap,seconds,val_score,selected");
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 4u);
}

TEST_F(CliTest, MetaFeatureRoles) {
  const auto data = regression_csv();
  const auto model = path("m.json");
  const auto r = call({"train", "--data", data, "--label", "y", "--task", "regression", "--depth", "1",
                       "--split-features", "kind,x", "--leaf-features", "w", "--model-out", model});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto tree = load_model(model);
  // Encoded order: x, w, kind=a, kind=b.
  EXPECT_EQ(tree.split_features, (std::vector<std::size_t>{0, 2, 3}));
  EXPECT_EQ(tree.leaf_features, (std::vector<std::size_t>{1}));
  EXPECT_EQ(call({"train", "--data", data, "--label", "y", "--task", "regression", "--split-features", "nope",
                  "--model-out", model})
                .code,
            kDataError);
}

TEST_F(CliTest, EvaluateClassification) {
  const auto data = classification_csv();
  const auto model = path("m.json");
  ASSERT_EQ(call({"train", "--data", data, "--label", "cls", "--task", "classification", "--depth", "0", "--model-out",
                  model})
                .code,
            kOk);
  const auto r = call({"evaluate", "--model", model, "--data", data, "--format", "json"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  // One linear SVM separates the two halves of the line.
  EXPECT_DOUBLE_EQ(j["accuracy"].get<double>(), 1.0);
  const auto p = call({"predict", "--model", model, "--data", data});
  EXPECT_EQ(p.out.substr(0, 4), "neg\n");
}

TEST_F(CliTest, DataErrors) {
  const auto bad = write("bad.csv", "x,y\n1,2\n3\n");
  EXPECT_EQ(call({"train", "--data", bad, "--label", "y", "--task", "regression", "--model-out", path("m.json")}).code,
            kDataError);
  const auto text = write("text.csv", "x,y\n1,a\n2,b\n3,c\n");
  EXPECT_EQ(call({"train", "--data", text, "--label", "y", "--task", "regression", "--model-out", path("m.json")}).code,
            kDataError);
  const auto junk = write("junk.json", "{}");
  EXPECT_EQ(call({"predict", "--model", junk, "--data", text}).code, kDataError);
}

TEST_F(CliTest, NoTreeWithinTimeLimit) {
  const auto data = regression_csv(40);
  const auto r = call({"train", "--data", data, "--label", "y", "--task", "regression", "--depth", "2",
                       "--time-limit", "1e-9", "--model-out", path("m.json")});
  EXPECT_EQ(r.code, kNoSolution) << r.err;
  EXPECT_FALSE(fs::exists(path("m.json")));
}

TEST_F(CliTest, ExportLp) {
  const auto data = regression_csv();
  const auto r = call({"export-lp", "--data", data, "--label", "y", "--task", "regression", "--depth", "1"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_NE(r.out.find("\nMinimize\n"), std::string::npos);
  EXPECT_NE(r.out.find("Binaries"), std::string::npos);
}

TEST_F(CliTest, ExperimentJson) {
  const auto data = regression_csv(20);
  const auto r = call({"experiment", "--data", data, "--label", "y", "--task", "regression", "--runs", "2",
                       "--max-depth", "0", "--C-grid", "1", "--format", "json", "--report-out", path("rep.json")});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["runs"].size(), 2u);
  EXPECT_TRUE(fs::exists(path("rep.json")));
}

}  // namespace
}  // namespace optree::cli
