#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "sparxnet/cli.hpp"

using namespace sparxnet;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "sparxnet");
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("sparxnet_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  /// Small, fast training flags appended to `args`.
  static std::vector<std::string> quick(std::vector<std::string> args) {
    for (const char* a : {"--hidden", "8", "8", "--iterations", "60", "--eval-every", "20", "--lipschitz-grid", "11"})
      args.emplace_back(a);
    return args;
  }

  void synth(const std::string& name, const std::string& kind = "single", const std::string& n = "200") {
    const auto r = run({"synth", kind, "--n", n, "--seed", "3", "--out", path(name)});
    ASSERT_EQ(r.code, 0) << r.err;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, SynthShapeAndManifest) {
  const auto r = run({"synth", "single", "--n", "1000", "--noisy", "2", "--seed", "7", "--out", path("d.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto text = io::read_text(path("d.csv"));
  EXPECT_EQ(count_lines(text), 1001u);
  EXPECT_EQ(text.substr(0, text.find('\n')), "x0,x1,x2,y");
  const auto manifest = io::read_json(path("d.csv.manifest.json"));
  EXPECT_EQ(manifest.at("command"), "synth");
  EXPECT_EQ(manifest.at("seed"), 7);
  EXPECT_EQ(manifest.at("config").at("n"), 1000);
  EXPECT_EQ(manifest.at("outputs").size(), 2u);
  for (const auto& o : manifest.at("outputs")) EXPECT_TRUE(fs::exists(o.get<std::string>()));
  const auto data = load_dataset(path("d.csv"));
  EXPECT_EQ(data.true_features, std::vector<std::size_t>{1});
}

TEST_F(Cli, BoundReport) {
  const auto r = run({"bound", "--k", "1", "--d", "10", "--n", "1000", "--chi", "1", "--lip", "1", "--gamma", "1",
                      "--loss-lip", "1", "--loss-bound", "1", "--delta", "0.05", "--manifest", path("b.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = nlohmann::json::parse(r.out);
  EXPECT_NEAR(report.at("excess_risk").get<double>(), 498.1, 0.1);
  EXPECT_TRUE(fs::exists(path("b.json")));
  io::write_text(path("in.json"), R"({"K": 1, "d": 10, "N": 1000})");
  const auto from_file = run({"bound", "--inputs", path("in.json"), "--n", "2000", "--manifest", path("b2.json")});
  ASSERT_EQ(from_file.code, 0) << from_file.err;
  EXPECT_EQ(nlohmann::json::parse(from_file.out).at("inputs").at("N"), 2000.0);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({"train", "--model", "sparxnet", "--frobulate"}).code, 2);
  const auto r = run({"train", "--model", "sparxnet", "--frobulate"});
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"nonsense"}).code, 2);
  EXPECT_EQ(run({"synth", "triple", "--out", path("x.csv")}).code, 2);
  EXPECT_EQ(run({"synth", "single"}).code, 2);  // --out missing
  EXPECT_EQ(run({"synth", "single", "--n", "abc", "--out", path("x.csv")}).code, 2);
  EXPECT_EQ(run({"synth", "single", "--n", "-3", "--out", path("x.csv")}).code, 2);
  io::write_text(path("bad.json"), R"({"frobulate": 1})");
  EXPECT_EQ(run({"synth", "single", "--config", path("bad.json"), "--out", path("x.csv")}).code, 2);
  io::write_text(path("typed.json"), R"({"n": "many"})");
  EXPECT_EQ(run({"synth", "single", "--config", path("typed.json"), "--out", path("x.csv")}).code, 2);
  EXPECT_EQ(run({"--version"}).code, 0);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(Cli, RuntimeErrorsExitOne) {
  const auto missing = run({"train", "--data", path("absent.csv"), "--out", path("t")});
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("error:"), std::string::npos);
  io::write_text(path("corrupt.json"), "{ not json");
  EXPECT_EQ(run({"saturation", "--model-file", path("corrupt.json"), "--out", path("s.csv")}).code, 1);
  io::write_text(path("ragged.csv"), "a,y\n1,2\n3\n");
  EXPECT_EQ(run({"train", "--data", path("ragged.csv"), "--out", path("t")}).code, 1);
  EXPECT_EQ(run({"synth", "single", "--noisy", "2", "--position", "5", "--out", path("x.csv")}).code, 1);
}

TEST_F(Cli, FuzzedArgumentsNeverCrash) {
  const std::vector<std::string> pieces{"train", "synth", "bound", "--n", "--out", "-1", "1e400", "", "--k",
                                        "single", "--seed", "x", "--config", "--lr", "nan", "--hidden", "0"};
  Rng rng(99);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::string> args;
    const auto len = rng.below(6);
    for (std::uint64_t j = 0; j < len; ++j) args.push_back(pieces[rng.below(pieces.size())]);
    const auto cwd = fs::current_path();
    fs::current_path(dir_);
    const auto r = run(args);
    fs::current_path(cwd);
    EXPECT_TRUE(r.code == 0 || r.code == 1 || r.code == 2);
    if (r.code != 0) EXPECT_FALSE(r.err.empty());
  }
}

TEST_F(Cli, ConfigPrecedence) {
  io::write_text(path("c.json"), R"({"n": 50, "sigma": 0.5})");
  const auto r = run({"synth", "single", "--config", path("c.json"), "--n", "30", "--out", path("p.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto config = io::read_json(path("p.csv.manifest.json")).at("config");
  EXPECT_EQ(config.at("n"), 30);       // flag beats file
  EXPECT_EQ(config.at("sigma"), 0.5);  // file beats default
  EXPECT_EQ(config.at("seed"), 0);     // default
  EXPECT_EQ(count_lines(io::read_text(path("p.csv"))), 31u);
}

TEST_F(Cli, TrainEvalAndRepeatability) {
  synth("d.csv");
  const auto base = quick({"train", "--data", path("d.csv"), "--seed", "1"});
  auto first = base, second = base;
  first.insert(first.end(), {"--out", path("a")});
  second.insert(second.end(), {"--out", path("b")});
  const auto r = run(first);
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_EQ(run(second).code, 0);
  for (const char* f : {"model.json", "metrics.json", "report.json", "trace.csv"})
    EXPECT_EQ(io::read_text(dir_ / "a" / f), io::read_text(dir_ / "b" / f)) << f;
  const auto manifest = io::read_json(dir_ / "a" / "manifest.json");
  EXPECT_TRUE(manifest.at("inputs").contains(path("d.csv")));
  for (const auto& o : manifest.at("outputs")) EXPECT_TRUE(fs::exists(o.get<std::string>()));

  const auto metrics = io::read_json(dir_ / "a" / "metrics.json");
  EXPECT_EQ(metrics.at("selected_features").size(), 1u);
  const auto eval = run({"eval", "--model-file", path("a/model.json"), "--data", path("d.csv"), "--out", path("e")});
  ASSERT_EQ(eval.code, 0) << eval.err;
  EXPECT_EQ(count_lines(io::read_text(dir_ / "e" / "predictions.csv")), 201u);
  EXPECT_TRUE(io::read_json(dir_ / "e" / "metrics.json").contains("mse"));
}

TEST_F(Cli, ModelFileRoundTrip) {
  synth("d.csv");
  ASSERT_EQ(run(quick({"train", "--data", path("d.csv"), "--pathways", "2", "--out", path("a")})).code, 0);
  const auto m = read_model(path("a/model.json"));
  EXPECT_EQ(io::dump_json(to_json(m)), io::read_text(path("a/model.json")));
  const auto data = load_dataset(path("d.csv"));
  const Vector direct = predict(m.params, data.x, m.tau_final);
  EXPECT_EQ(m.predict(data.x), direct);
}

TEST_F(Cli, SaturationAndCurves) {
  synth("m.csv", "multi");
  ASSERT_EQ(run(quick({"train", "--data", path("m.csv"), "--pathways", "3", "--out", path("a")})).code, 0);
  ASSERT_EQ(run({"saturation", "--model-file", path("a/model.json"), "--out", path("s.csv")}).code, 0);
  const auto table = parse_csv(io::read_text(path("s.csv")));
  ASSERT_EQ(table.rows.size(), 3u);
  ASSERT_EQ(table.header.size(), 11u);
  for (const auto& row : table.rows) {
    double sum = 0.0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      const double v = std::stod(*row[c]);
      EXPECT_GT(v, 0.0);
      EXPECT_LE(v, 1.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  // Huge temperature flattens the routing to 1/d.
  ASSERT_EQ(run({"saturation", "--model-file", path("a/model.json"), "--tau", "1e12", "--out", path("u.csv")}).code, 0);
  for (const auto& row : parse_csv(io::read_text(path("u.csv"))).rows)
    for (std::size_t c = 1; c < row.size(); ++c) EXPECT_NEAR(std::stod(*row[c]), 0.1, 1e-9);
  ASSERT_EQ(run({"export-curves", "--model-file", path("a/model.json"), "--samples", "5", "--out", path("c.csv")}).code,
            0);
  EXPECT_EQ(count_lines(io::read_text(path("c.csv"))), 1u + 3u * 5u);
  ASSERT_EQ(run({"bound", "--model", path("a/model.json"), "--lipschitz-grid", "11", "--manifest", path("bm.json")}).code,
            0);
}

TEST_F(Cli, Baselines) {
  synth("d.csv");
  for (const char* model : {"lasso", "ridge", "fcn"}) {
    const auto r = run(quick({"train", "--data", path("d.csv"), "--model", model, "--out", path(model)}));
    ASSERT_EQ(r.code, 0) << model << ": " << r.err;
    EXPECT_TRUE(io::read_json(dir_ / model / "metrics.json").at("test").contains("mse"));
  }
  EXPECT_EQ(run({"train", "--data", path("d.csv"), "--model", "logreg", "--out", path("l")}).code, 1);
  EXPECT_EQ(run({"train", "--data", path("d.csv"), "--model", "svm", "--out", path("l")}).code, 1);
}

TEST_F(Cli, BinaryCsvWithLogreg) {
  std::string text = "a,b,kind,label\n";
  Rng rng(4);
  for (int i = 0; i < 120; ++i) {
    const double a = rng.normal(), b = rng.normal();
    text += std::to_string(a) + "," + std::to_string(b) + "," + (i % 3 ? "p" : "q") + "," + (a > 0 ? "yes" : "no") + "\n";
  }
  io::write_text(path("bin.csv"), text);
  const auto r = run({"train", "--data", path("bin.csv"), "--target", "label", "--positive", "yes", "--categorical",
                      "kind", "--model", "logreg", "--out", path("l")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto metrics = io::read_json(dir_ / "l" / "metrics.json");
  EXPECT_GT(metrics.at("test").at("auc").get<double>(), 0.9);
  const auto m = read_model(path("l/model.json"));
  EXPECT_EQ(m.feature_names, (std::vector<std::string>{"a", "b", "kind=p", "kind=q"}));
}

TEST_F(Cli, HpoWritesLeaderboard) {
  synth("d.csv", "single", "150");
  const auto r = run(quick({"hpo", "--data", path("d.csv"), "--trials", "2", "--out", path("h")}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(io::read_json(dir_ / "h" / "leaderboard.json").size(), 2u);
  const auto best = io::read_json(dir_ / "h" / "best_config.json");
  const auto reuse = run({"train", "--config", path("h/best_config.json"), "--data", path("d.csv"), "--lipschitz-grid",
                          "11", "--out", path("t")});
  EXPECT_EQ(reuse.code, 0) << reuse.err;
  EXPECT_GE(best.at("dropout").get<double>(), 0.1);
}
