#include <gtest/gtest.h>

#include <filesystem>

#include "cli_support.hpp"
#include "json.hpp"
#include "riskgate/dataset.hpp"
#include "test_files.hpp"

namespace riskgate {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::make_corpus;
using testing::outputs_for;
using testing::read_text;
using testing::run_cli;
using testing::scratch_dir;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = scratch_dir();
    corpus_ = dir_ / "corpus.jsonl";
    write_instances(corpus_, make_corpus(160, 3));
  }

  int run(const std::vector<std::string>& args) { return run_cli(args, dir_ / "log.txt"); }
  std::string log() const { return read_text(dir_ / "log.txt"); }
  std::string p(const fs::path& path) const { return path.string(); }

  // perturb into dir_/name, with outputs beside every file.
  fs::path perturb(const std::string& rif, const std::string& name) {
    const auto out = dir_ / name;
    EXPECT_EQ(run({"perturb", "--instances", p(corpus_), "--rif", rif, "--seed", "7", "--out", p(out)}), 0)
        << log();
    for (const char* f : {"train_original", "train_injected", "eval_original", "eval_injected"}) {
      outputs_for(out / (std::string(f) + ".jsonl"), 11);
    }
    return out;
  }

  fs::path train_dwd(const fs::path& set) {
    const auto model = dir_ / "model.json";
    EXPECT_EQ(run({"train", "--rule", "dwd", "--instances", p(set / "train_original.jsonl"),
                   p(set / "train_injected.jsonl"), "--outputs",
                   p(set / "train_original.outputs.jsonl"), p(set / "train_injected.outputs.jsonl"),
                   "--trees", "30", "--seed", "7", "--out", p(model)}),
              0)
        << log();
    return model;
  }

  json eval_decision(const fs::path& model, const fs::path& set, const std::string& out) {
    EXPECT_EQ(run({"eval", "--model", p(model), "--mode", "decision", "--instances",
                   p(set / "eval_original.jsonl"), p(set / "eval_injected.jsonl"), "--outputs",
                   p(set / "eval_original.outputs.jsonl"), p(set / "eval_injected.outputs.jsonl"),
                   "--out", p(dir_ / out)}),
              0)
        << log();
    return json::parse(read_text(dir_ / out / "report.json"));
  }

  fs::path dir_;
  fs::path corpus_;
};

TEST_F(Cli, PerturbWritesBalancedFilesDeterministically) {
  const auto a = perturb("wq", "a");
  EXPECT_EQ(run({"perturb", "--instances", p(corpus_), "--rif", "wq", "--seed", "7", "--out", p(dir_ / "b")}), 0);
  for (const char* f : {"train_original.jsonl", "train_injected.jsonl", "eval_original.jsonl",
                        "eval_injected.jsonl", "summary.json"}) {
    EXPECT_EQ(read_text(a / f), read_text(dir_ / "b" / f)) << f;
  }
  const auto summary = json::parse(read_text(a / "summary.json"));
  EXPECT_EQ(summary["train"]["original"], summary["train"]["injected"]);
  EXPECT_EQ(summary["eval"]["original"], summary["eval"]["injected"]);
  EXPECT_EQ(summary["train"]["original"].get<int>() + summary["eval"]["original"].get<int>(), 160);
}

TEST_F(Cli, SeedFallsBackToEnvironment) {
  ::setenv("RISKGATE_SEED", "7", 1);
  EXPECT_EQ(run({"perturb", "--instances", p(corpus_), "--rif", "nra", "--out", p(dir_ / "env")}), 0);
  ::unsetenv("RISKGATE_SEED");
  EXPECT_EQ(run({"perturb", "--instances", p(corpus_), "--rif", "nra", "--seed", "7", "--out", p(dir_ / "flag")}), 0);
  EXPECT_EQ(read_text(dir_ / "env" / "eval_injected.jsonl"),
            read_text(dir_ / "flag" / "eval_injected.jsonl"));
}

TEST_F(Cli, TrainEvalLabelsIdAndOod) {
  const auto wq = perturb("wq", "wq");
  const auto nra = perturb("nra", "nra");
  const auto model = train_dwd(wq);

  const auto id = eval_decision(model, wq, "id");
  EXPECT_EQ(id["domain"], "ID");
  EXPECT_EQ(id["train_rif"], "wq");
  EXPECT_GE(id["decision_risk_accuracy"]["value"].get<double>(), 0.9);
  EXPECT_EQ(id["significance"]["stars"], "**");

  const auto ood = eval_decision(model, nra, "ood");
  EXPECT_EQ(ood["domain"], "OOD");

  EXPECT_TRUE(fs::exists(dir_ / "id" / "report.tsv"));
  EXPECT_TRUE(fs::exists(dir_ / "id" / "decisions.jsonl"));
  EXPECT_TRUE(fs::exists(dir_ / "id" / "manifest.json"));
}

TEST_F(Cli, CompositeModeAndCurve) {
  const auto wq = perturb("wq", "wq");
  const auto model = train_dwd(wq);
  ASSERT_EQ(run({"eval", "--model", p(model), "--mode", "composite", "--instances",
                 p(wq / "eval_original.jsonl"), "--outputs", p(wq / "eval_original.outputs.jsonl"),
                 "--out", p(dir_ / "comp")}),
            0)
      << log();
  const auto report = json::parse(read_text(dir_ / "comp" / "report.json"));
  const auto& t = report["table"];
  EXPECT_EQ(t["a"].get<int>() + t["b"].get<int>() + t["c"].get<int>() + t["d"].get<int>(),
            static_cast<int>(load_instances(wq / "eval_original.jsonl").size()));

  ASSERT_EQ(run({"curve", "--decisions", p(dir_ / "comp" / "decisions.jsonl"), "--instances",
                 p(wq / "eval_original.jsonl"), "--svg", "--out", p(dir_ / "curve")}),
            0)
      << log();
  const auto csv = read_text(dir_ / "curve" / "curve.csv");
  EXPECT_EQ(csv.rfind("coverage,risk\n", 0), 0u);
  EXPECT_TRUE(fs::exists(dir_ / "curve" / "curve.svg"));

  // The rule-driven route gives the same curve.
  ASSERT_EQ(run({"curve", "--model", p(model), "--instances", p(wq / "eval_original.jsonl"),
                 "--outputs", p(wq / "eval_original.outputs.jsonl"), "--out", p(dir_ / "curve2")}),
            0)
      << log();
  EXPECT_EQ(read_text(dir_ / "curve2" / "curve.csv"), csv);

  EXPECT_EQ(run({"report", p(dir_ / "comp" / "report.json"), "--out", p(dir_ / "r.csv")}), 0);
  EXPECT_NE(read_text(dir_ / "r.csv").find("composite"), std::string::npos);
}

TEST_F(Cli, ModeGuardsAreInputErrors) {
  const auto wq = perturb("wq", "wq");
  const auto model = train_dwd(wq);
  EXPECT_EQ(run({"eval", "--model", p(model), "--mode", "composite", "--instances",
                 p(wq / "eval_injected.jsonl"), "--outputs", p(wq / "eval_injected.outputs.jsonl"),
                 "--out", p(dir_ / "x")}),
            2);
  EXPECT_NE(log().find("composite"), std::string::npos);
  EXPECT_EQ(run({"eval", "--model", p(model), "--mode", "decision", "--instances",
                 p(wq / "eval_original.jsonl"), "--outputs", p(wq / "eval_original.outputs.jsonl"),
                 "--out", p(dir_ / "y")}),
            2);
}

TEST_F(Cli, RandomRuleNeedsNoModel) {
  const auto wq = perturb("wq", "wq");
  ASSERT_EQ(run({"eval", "--rule", "random", "--mode", "decision", "--seed", "1", "--instances",
                 p(wq / "eval_original.jsonl"), p(wq / "eval_injected.jsonl"), "--outputs",
                 p(wq / "eval_original.outputs.jsonl"), p(wq / "eval_injected.outputs.jsonl"),
                 "--out", p(dir_ / "rand")}),
            0)
      << log();
  const auto report = json::parse(read_text(dir_ / "rand" / "report.json"));
  EXPECT_EQ(report["rule"], "random");
  EXPECT_EQ(report["domain"], "n/a");
  EXPECT_EQ(run({"train", "--rule", "random", "--instances", p(wq / "train_original.jsonl"),
                 "--outputs", p(wq / "train_original.outputs.jsonl"), "--out", p(dir_ / "r.json")}),
            2);
}

TEST_F(Cli, BadInputsExitWithCodeTwo) {
  EXPECT_EQ(run({"perturb", "--instances", p(dir_ / "missing.jsonl"), "--rif", "wq", "--out", p(dir_ / "o")}), 2);
  EXPECT_EQ(run({"perturb", "--instances", p(corpus_), "--rif", "xx", "--out", p(dir_ / "o")}), 2);
  testing::write_text(dir_ / "bad.jsonl", "{\"id\": 1}\n");
  EXPECT_EQ(run({"perturb", "--instances", p(dir_ / "bad.jsonl"), "--rif", "wq", "--out", p(dir_ / "o")}), 2);
  EXPECT_NE(log().find("bad.jsonl:1"), std::string::npos) << log();
  EXPECT_EQ(run({}), 2);
  EXPECT_EQ(run({"--version"}), 0);
}

TEST_F(Cli, OverloadWritesTrialFiles) {
  ASSERT_EQ(run({"overload", "--instances", p(corpus_), "--n", "5", "10", "--method", "heuristic",
                 "--trials", "2", "--per-trial", "20", "--seed", "4", "--out", p(dir_ / "ov")}),
            0)
      << log();
  for (const char* f : {"overload_heuristic_n5_t0.jsonl", "overload_heuristic_n5_t1.jsonl",
                        "overload_heuristic_n10_t0.jsonl", "overload_heuristic_n10_t1.jsonl"}) {
    const auto insts = load_instances(dir_ / "ov" / f);
    EXPECT_EQ(insts.size(), 20u) << f;
  }
  EXPECT_EQ(load_instances(dir_ / "ov" / "overload_heuristic_n10_t0.jsonl")[0].choices.size(), 10u);
}

}  // namespace
}  // namespace riskgate
