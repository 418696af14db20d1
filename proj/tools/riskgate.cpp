// riskgate: perturb / overload / train / eval / curve / report.
//
// Stages talk to each other only through files. Exit codes: 0 success,
// 2 bad input or arguments, 1 internal failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "riskgate/dataset.hpp"
#include "riskgate/error.hpp"
#include "riskgate/features.hpp"
#include "riskgate/forest.hpp"
#include "riskgate/metrics.hpp"
#include "riskgate/overload.hpp"
#include "riskgate/random.hpp"
#include "riskgate/rif.hpp"
#include "riskgate/rules.hpp"

#ifndef RISKGATE_VERSION
#define RISKGATE_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace riskgate {
namespace {

constexpr int kExitInput = 2;
constexpr int kExitInternal = 1;

struct RunConfig {
  std::vector<fs::path> instances;
  std::vector<fs::path> outputs;
  fs::path model;
  fs::path decisions;
  fs::path out;
  std::string rule = "dwd";
  std::string rif;
  std::string mode = "decision";
  std::vector<int> n{5};
  std::string method = "random";
  int trials = 3;
  int per_trial = 50;
  double split = 0.5;
  int k_max = 4;
  bool include_embedding = false;
  ForestParams forest;
  double cutoff = 0.5;
  std::optional<std::uint64_t> seed;
  bool svg = false;
  bool normalize = false;
  int workers = 1;
  std::vector<fs::path> reports;
};

std::uint64_t resolve_seed(const RunConfig& cfg) {
  if (cfg.seed) return *cfg.seed;
  if (const char* env = std::getenv("RISKGATE_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw InputError(std::string("RISKGATE_SEED is not an unsigned integer: '") + env + "'");
  }
  return 0;
}

// Config hash: subcommand, non-path settings and the bytes of every input
// file, so runs from different directories over the same data agree.
class ConfigHash {
 public:
  explicit ConfigHash(std::string_view command) { add("cmd", command); }

  void add(std::string_view key, std::string_view value) {
    h_ = fnv1a64(key, h_);
    h_ = fnv1a64("=", h_);
    h_ = fnv1a64(value, h_);
    h_ = fnv1a64(";", h_);
  }
  void add(std::string_view key, double v) { add(key, format_double(v)); }
  void add_int(std::string_view key, long long v) { add(key, std::to_string(v)); }
  void add_file(std::string_view key, const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    add(key, std::to_string(fnv1a64(ss.str())));
  }
  void add_files(std::string_view key, const std::vector<fs::path>& paths) {
    for (const auto& p : paths) add_file(key, p);
  }

  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h_));
    return buf;
  }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

json artifact_meta(std::uint64_t seed, const ConfigHash& hash) {
  return {{"tool", "riskgate"},
          {"tool_version", RISKGATE_VERSION},
          {"seed", seed},
          {"config_hash", hash.hex()}};
}

void ensure_dir(const fs::path& dir) {
  if (dir.empty()) throw InputError("--out is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create " + dir.string() + ": " + ec.message());
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string joined_benchmarks(std::span<const Instance> instances) {
  std::set<std::string> names;
  for (const auto& i : instances) names.insert(i.benchmark);
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : "+") + n;
  return out;
}

std::vector<ModelOutput> load_outputs_for(const RunConfig& cfg) {
  if (cfg.outputs.empty()) throw InputError("--outputs is required");
  auto outputs = load_outputs(cfg.outputs);
  if (cfg.normalize) {
    for (auto& o : outputs) normalize_confidences(o);
  }
  return outputs;
}

FeatureSchema schema_from(const RunConfig& cfg) {
  FeatureSchema schema;
  schema.k_max = cfg.k_max;
  schema.include_embedding = cfg.include_embedding;
  return schema;
}

// ----------------------------------------------------------------- perturb

int cmd_perturb(const RunConfig& cfg) {
  const auto seed = resolve_seed(cfg);
  if (cfg.rif.empty()) throw InputError("--rif is required");
  const RifKind rif = parse_rif_kind(cfg.rif);
  const auto instances = load_instances(cfg.instances);
  ensure_dir(cfg.out);

  ConfigHash hash("perturb");
  hash.add_files("instances", cfg.instances);
  hash.add("rif", cfg.rif);
  hash.add("split", cfg.split);
  hash.add_int("seed", static_cast<long long>(seed));

  const auto parts = split(instances, cfg.split, seed);
  json summary = {{"artifact", artifact_meta(seed, hash)}, {"rif", cfg.rif}};
  for (const auto& [name, side] : {std::pair{"train", &parts.train}, std::pair{"eval", &parts.eval}}) {
    const auto balanced = build_balanced_set(*side, rif, derive_seed(seed, name));
    std::vector<Instance> original, injected;
    for (const auto& item : balanced) {
      (item.dr_label == 1 ? original : injected).push_back(item.instance);
    }
    write_instances(cfg.out / (std::string(name) + "_original.jsonl"), original);
    write_instances(cfg.out / (std::string(name) + "_injected.jsonl"), injected);
    summary[name] = {{"original", original.size()}, {"injected", injected.size()}};
  }
  write_json(cfg.out / "summary.json", summary);
  std::cout << summary.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------- overload

int cmd_overload(const RunConfig& cfg) {
  const auto seed = resolve_seed(cfg);
  const auto instances = load_instances(cfg.instances);
  const OverloadMethod method = parse_overload_method(cfg.method);
  ensure_dir(cfg.out);

  Embedder embed = fallback_embed;
  std::unordered_map<std::string, Embedding> supplied;
  if (!cfg.outputs.empty()) {
    const auto outputs = load_outputs(cfg.outputs);
    std::unordered_map<std::string, const ModelOutput*> by_id;
    for (const auto& o : outputs) by_id.emplace(o.instance_id, &o);
    for (const auto& inst : instances) {
      auto it = by_id.find(inst.id);
      if (it != by_id.end() && it->second->prompt_embedding) {
        supplied.emplace(inst.prompt, *it->second->prompt_embedding);
      }
    }
    embed = [&supplied](std::string_view text) {
      auto it = supplied.find(std::string(text));
      if (it == supplied.end()) {
        throw InputError("overload: no supplied prompt embedding for prompt '" +
                         std::string(text.substr(0, 60)) + "'");
      }
      return it->second;
    };
  }

  ConfigHash hash("overload");
  hash.add_files("instances", cfg.instances);
  hash.add_files("outputs", cfg.outputs);
  hash.add("method", cfg.method);
  hash.add_int("trials", cfg.trials);
  hash.add_int("per_trial", cfg.per_trial);
  for (int n : cfg.n) hash.add_int("n", n);
  hash.add_int("seed", static_cast<long long>(seed));

  json files = json::array();
  for (int n : cfg.n) {
    OverloadConfig oc{n, method, cfg.trials, cfg.per_trial, derive_seed(seed, n)};
    const auto trials = build_overload_eval(instances, oc, embed);
    for (std::size_t t = 0; t < trials.size(); ++t) {
      const auto name = overload_file_name(method, n, static_cast<int>(t));
      write_instances(cfg.out / name, trials[t]);
      files.push_back(name);
    }
  }
  json summary = {{"artifact", artifact_meta(seed, hash)}, {"files", files}};
  write_json(cfg.out / "summary.json", summary);
  std::cout << summary.dump(2) << '\n';
  return 0;
}

// ------------------------------------------------------------------- train

int cmd_train(const RunConfig& cfg) {
  const auto seed = resolve_seed(cfg);
  if (cfg.rule == "random" || cfg.rule == "builtin") {
    throw InputError("rule '" + cfg.rule + "' needs no training");
  }
  if (cfg.out.empty()) throw InputError("--out (model file) is required");
  const auto instances = load_instances(cfg.instances);
  const auto outputs = load_outputs_for(cfg);
  const auto pairs = join(instances, outputs);

  // Training RIF: --rif, cross-checked against the injected instances.
  std::set<std::string> seen_rifs;
  for (const auto& inst : instances) {
    if (auto r = rif_of(inst.provenance)) seen_rifs.insert(to_string(*r));
  }
  std::optional<std::string> rif;
  if (!cfg.rif.empty()) {
    rif = to_string(parse_rif_kind(cfg.rif));
    if (!seen_rifs.empty() && (seen_rifs.size() != 1 || *seen_rifs.begin() != *rif)) {
      throw InputError("--rif " + *rif + " conflicts with the provenance of the training set");
    }
  } else if (seen_rifs.size() == 1) {
    rif = *seen_rifs.begin();
  } else if (seen_rifs.size() > 1) {
    rif = "mixed";
  }

  ConfigHash hash("train");
  hash.add_files("instances", cfg.instances);
  hash.add_files("outputs", cfg.outputs);
  hash.add("rule", cfg.rule);
  hash.add("rif", rif.value_or(""));
  hash.add_int("k_max", cfg.k_max);
  hash.add_int("include_embedding", cfg.include_embedding);
  hash.add_int("trees", cfg.forest.n_trees);
  hash.add_int("max_depth", cfg.forest.max_depth);
  hash.add_int("min_leaf", cfg.forest.min_leaf);
  hash.add("cutoff", cfg.cutoff);
  hash.add_int("normalize", cfg.normalize);
  hash.add_int("seed", static_cast<long long>(seed));

  DecisionRule rule;
  if (cfg.rule == "confstd") {
    rule.kind = train_confstd_rule(pairs);
  } else {
    ForestParams params = cfg.forest;
    params.seed = seed;
    rule.kind = train_learned_rule(pairs, parse_feature_kind(cfg.rule), schema_from(cfg), params,
                                   cfg.cutoff, cfg.workers);
  }
  rule.rif_kind = rif;
  rule.train_benchmark = joined_benchmarks(instances);
  rule.artifact = artifact_meta(seed, hash);
  if (cfg.out.has_parent_path()) ensure_dir(cfg.out.parent_path());
  save_rule(rule, cfg.out);
  std::cout << "trained " << rule.name() << " on " << pairs.size() << " instances -> "
            << cfg.out.string() << '\n';
  return 0;
}

// -------------------------------------------------------- eval and curve

DecisionRule rule_for(const RunConfig& cfg, std::uint64_t seed) {
  if (!cfg.model.empty()) return load_rule(cfg.model);
  DecisionRule rule;
  if (cfg.rule == "random") {
    rule.kind = RandomRule{seed};
  } else if (cfg.rule == "builtin") {
    rule.kind = BuiltinPassthrough{};
  } else {
    throw InputError("--model is required for rule '" + cfg.rule + "'");
  }
  return rule;
}

std::vector<Decision> run_rule(const DecisionRule& rule, std::span<const Instance> instances,
                               std::span<const ModelOutput> outputs) {
  const auto pairs = join(instances, outputs);
  std::vector<Decision> decisions;
  decisions.reserve(pairs.size());
  for (const auto& p : pairs) {
    decisions.push_back(decide(rule, *p.instance, *p.output));
    attach_correctness(decisions.back(), *p.instance);
  }
  return decisions;
}

std::string domain_of(const DecisionRule& rule, std::span<const Instance> instances) {
  if (!rule.rif_kind) return "n/a";
  std::set<std::string> eval_rifs;
  for (const auto& inst : instances) {
    if (auto r = rif_of(inst.provenance)) eval_rifs.insert(to_string(*r));
  }
  if (eval_rifs.empty()) return "n/a";
  return eval_rifs.size() == 1 && *eval_rifs.begin() == *rule.rif_kind ? "ID" : "OOD";
}

int cmd_eval(const RunConfig& cfg) {
  const auto seed = resolve_seed(cfg);
  const auto rule = rule_for(cfg, seed);
  const auto instances = load_instances(cfg.instances);
  const auto outputs = load_outputs_for(cfg);
  ensure_dir(cfg.out);

  const bool any_ambiguous =
      std::any_of(instances.begin(), instances.end(), [](const Instance& i) { return i.ambiguous; });
  if (cfg.mode == "decision" && !any_ambiguous) {
    throw InputError("decision mode needs risk-injected (ambiguous) instances in the eval set");
  }
  if (cfg.mode == "composite" && any_ambiguous) {
    throw InputError("composite mode is defined on unambiguous instances only");
  }
  if (cfg.mode != "decision" && cfg.mode != "composite") {
    throw InputError("unknown --mode '" + cfg.mode + "'");
  }

  ConfigHash hash("eval");
  if (!cfg.model.empty()) hash.add_file("model", cfg.model);
  hash.add_files("instances", cfg.instances);
  hash.add_files("outputs", cfg.outputs);
  hash.add("rule", rule.name());
  hash.add("mode", cfg.mode);
  hash.add_int("normalize", cfg.normalize);
  hash.add_int("seed", static_cast<long long>(seed));

  const auto decisions = run_rule(rule, instances, outputs);

  EvalReport report;
  report.mode = cfg.mode;
  report.rule = rule.name();
  report.train_rif = rule.rif_kind;
  report.train_benchmark = rule.train_benchmark;
  report.eval_benchmark = joined_benchmarks(instances);
  report.domain = domain_of(rule, instances);
  report.seed = seed;
  if (cfg.mode == "decision") {
    report.decision = decision_risk_accuracy(decisions, instances);
    report.significance = binomial_significance(report.decision->hits, report.decision->n);
  } else {
    const auto table = composite_table(decisions, instances);
    report.table = table;
    report.sensitivity = sensitivity(table);
    report.specificity = specificity(table);
    report.rrr = rrr(table);
    report.selective = selective_risk(table);
    report.coverage = Fraction::of(table.a + table.b, table.total());
  }

  json j = to_json(report);
  j["artifact"] = artifact_meta(seed, hash);
  write_json(cfg.out / "report.json", j);
  {
    std::ofstream tsv(cfg.out / "report.tsv", std::ios::binary | std::ios::trunc);
    tsv << to_tsv(report);
  }
  write_decisions(cfg.out / "decisions.jsonl", decisions);
  write_json(cfg.out / "manifest.json",
             {{"artifact", artifact_meta(seed, hash)},
              {"files", {"report.json", "report.tsv", "decisions.jsonl"}}});
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_curve(const RunConfig& cfg) {
  const auto seed = resolve_seed(cfg);
  const auto instances = load_instances(cfg.instances);
  for (const auto& inst : instances) {
    if (inst.ambiguous) {
      throw InputError("curve: '" + inst.id + "' is ambiguous; curves need gold answers");
    }
  }
  ensure_dir(cfg.out);

  ConfigHash hash("curve");
  hash.add_files("instances", cfg.instances);
  std::vector<Decision> decisions;
  std::string rule_name;
  if (!cfg.decisions.empty()) {
    hash.add_file("decisions", cfg.decisions);
    decisions = load_decisions(cfg.decisions);
    std::unordered_map<std::string_view, const Instance*> by_id;
    for (const auto& inst : instances) by_id.emplace(inst.id, &inst);
    for (auto& d : decisions) {
      auto it = by_id.find(d.instance_id);
      if (it == by_id.end()) throw InputError("curve: decision for unknown '" + d.instance_id + "'");
      attach_correctness(d, *it->second);
    }
    if (decisions.size() != instances.size()) {
      throw InputError("curve: decisions do not cover every instance");
    }
    rule_name = "decisions";
  } else {
    const auto rule = rule_for(cfg, seed);
    if (!cfg.model.empty()) hash.add_file("model", cfg.model);
    hash.add_files("outputs", cfg.outputs);
    hash.add_int("normalize", cfg.normalize);
    decisions = run_rule(rule, instances, load_outputs_for(cfg));
    rule_name = rule.name();
  }
  hash.add_int("svg", cfg.svg);
  hash.add_int("seed", static_cast<long long>(seed));

  const auto curve = risk_coverage_curve(decisions);
  write_curve_csv(cfg.out / "curve.csv", curve);
  json files = {"curve.csv"};
  if (cfg.svg) {
    write_curve_svg(cfg.out / "curve.svg", curve, "risk-coverage (" + rule_name + ")");
    files.push_back("curve.svg");
  }
  write_json(cfg.out / "manifest.json", {{"artifact", artifact_meta(seed, hash)}, {"files", files}});
  std::cout << "wrote " << curve.size() << " curve points to " << (cfg.out / "curve.csv").string()
            << '\n';
  return 0;
}

// ------------------------------------------------------------------ report

int cmd_report(const RunConfig& cfg) {
  if (cfg.reports.empty()) throw InputError("report: no report files given");
  std::ostringstream table;
  table << "file,mode,rule,train_rif,domain,eval_benchmark,decision_risk_accuracy,stars,"
           "sensitivity,specificity,rrr,rrr_ci_low,rrr_ci_high,selective_risk,coverage\n";
  auto num = [](const json& j, const char* key, const char* field = "value") -> std::string {
    if (!j.contains(key) || j[key].is_null()) return "";
    const auto& v = j[key];
    if (v.is_object()) {
      return v.contains(field) && v[field].is_number() ? format_double(v[field].get<double>()) : "";
    }
    return v.is_number() ? format_double(v.get<double>()) : "";
  };
  auto str = [](const json& j, const char* key) -> std::string {
    return j.contains(key) && j[key].is_string() ? j[key].get<std::string>() : "";
  };
  for (const auto& path : cfg.reports) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw InputError(path.string() + ": " + e.what());
    }
    std::string stars;
    if (j.contains("significance") && j["significance"].is_object()) {
      stars = j["significance"].value("stars", "");
    }
    table << path.string() << ',' << str(j, "mode") << ',' << str(j, "rule") << ','
          << str(j, "train_rif") << ',' << str(j, "domain") << ',' << str(j, "eval_benchmark")
          << ',' << num(j, "decision_risk_accuracy") << ',' << stars << ','
          << num(j, "sensitivity") << ',' << num(j, "specificity") << ',' << num(j, "rrr") << ','
          << num(j, "rrr", "ci_low") << ',' << num(j, "rrr", "ci_high") << ','
          << num(j, "selective_risk") << ',' << num(j, "coverage") << '\n';
  }
  if (cfg.out.empty()) {
    std::cout << table.str();
  } else {
    if (cfg.out.has_parent_path()) ensure_dir(cfg.out.parent_path());
    std::ofstream out(cfg.out, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + cfg.out.string());
    out << table.str();
  }
  return 0;
}

}  // namespace
}  // namespace riskgate

int main(int argc, char** argv) {
  using namespace riskgate;
  CLI::App app{"riskgate: risk-centric evaluation of selective multiple-choice inference"};
  app.set_version_flag("--version", RISKGATE_VERSION);
  app.require_subcommand(1);
  RunConfig cfg;

  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", cfg.seed, "RNG seed (falls back to $RISKGATE_SEED, then 0)");
  };
  auto add_io = [&](CLI::App* sub, bool outputs) {
    sub->add_option("--instances", cfg.instances, "instances.jsonl file(s)")->required()->check(CLI::ExistingFile);
    if (outputs) sub->add_option("--outputs", cfg.outputs, "outputs.jsonl file(s)")->check(CLI::ExistingFile);
    sub->add_flag("--normalize", cfg.normalize, "rescale confidences to sum to 1");
  };
  const std::vector<std::string> rules{"random", "confstd", "calibrator", "dwd", "builtin"};

  auto* perturb = app.add_subcommand("perturb", "build balanced original/risk-injected train and eval sets");
  add_io(perturb, false);
  perturb->add_option("--rif", cfg.rif, "risk injection function")->required()->check(CLI::IsMember({"wq", "nra"}));
  perturb->add_option("--split", cfg.split, "train fraction")->capture_default_str();
  perturb->add_option("--out", cfg.out, "output directory")->required();
  add_seed(perturb);

  auto* overload = app.add_subcommand("overload", "build choice-overloaded evaluation sets");
  add_io(overload, true);
  overload->add_option("--n", cfg.n, "choice counts")->capture_default_str();
  overload->add_option("--method", cfg.method)->check(CLI::IsMember({"random", "heuristic"}))->capture_default_str();
  overload->add_option("--trials", cfg.trials)->capture_default_str();
  overload->add_option("--per-trial", cfg.per_trial)->capture_default_str();
  overload->add_option("--out", cfg.out, "output directory")->required();
  add_seed(overload);

  auto* train = app.add_subcommand("train", "train a decision rule");
  add_io(train, true);
  train->add_option("--rule", cfg.rule)->check(CLI::IsMember(rules))->capture_default_str();
  train->add_option("--rif", cfg.rif, "training RIF recorded in the model header")->check(CLI::IsMember({"wq", "nra"}));
  train->add_option("--k-max", cfg.k_max)->capture_default_str();
  train->add_flag("--include-embedding", cfg.include_embedding, "append the prompt embedding to DwD features");
  train->add_option("--trees", cfg.forest.n_trees)->capture_default_str();
  train->add_option("--max-depth", cfg.forest.max_depth)->capture_default_str();
  train->add_option("--min-leaf", cfg.forest.min_leaf)->capture_default_str();
  train->add_option("--cutoff", cfg.cutoff)->capture_default_str();
  train->add_option("--workers", cfg.workers)->capture_default_str();
  train->add_option("--out", cfg.out, "model file")->required();
  add_seed(train);

  auto* eval = app.add_subcommand("eval", "evaluate a decision rule");
  add_io(eval, true);
  eval->add_option("--model", cfg.model, "trained rule file")->check(CLI::ExistingFile);
  eval->add_option("--rule", cfg.rule, "untrained rule when no --model")->check(CLI::IsMember(rules));
  eval->add_option("--mode", cfg.mode)->check(CLI::IsMember({"decision", "composite"}))->capture_default_str();
  eval->add_option("--out", cfg.out, "output directory")->required();
  add_seed(eval);

  auto* curve = app.add_subcommand("curve", "risk-coverage curve");
  add_io(curve, true);
  curve->add_option("--model", cfg.model)->check(CLI::ExistingFile);
  curve->add_option("--rule", cfg.rule)->check(CLI::IsMember(rules));
  curve->add_option("--decisions", cfg.decisions, "decisions.jsonl instead of a rule")->check(CLI::ExistingFile);
  curve->add_flag("--svg", cfg.svg, "also render curve.svg");
  curve->add_option("--out", cfg.out, "output directory")->required();
  add_seed(curve);

  auto* report = app.add_subcommand("report", "tabulate report.json files as CSV");
  report->add_option("reports", cfg.reports, "report.json files")->required()->check(CLI::ExistingFile);
  report->add_option("--out", cfg.out, "CSV file (stdout when absent)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (*perturb) return cmd_perturb(cfg);
    if (*overload) return cmd_overload(cfg);
    if (*train) return cmd_train(cfg);
    if (*eval) return cmd_eval(cfg);
    if (*curve) return cmd_curve(cfg);
    if (*report) return cmd_report(cfg);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitInternal;
}
