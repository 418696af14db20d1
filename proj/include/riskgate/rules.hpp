#pragma once

// Selection rule (argmax confidence) and the decision rules that gate it:
// Random, ConfStd, learned forests (Calibrator / DwD) and the built-in
// abstention passthrough for generative models.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "riskgate/dataset.hpp"
#include "riskgate/features.hpp"
#include "riskgate/forest.hpp"

namespace riskgate {

// Index of the largest confidence; ties go to the lowest index.
std::size_t select(std::span<const double> confidences);

struct RandomRule {
  std::uint64_t seed = 0;
};

struct ConfStdRule {
  // dr = 1 iff conf_std >= threshold.
  double threshold = 0.0;
};

struct LearnedRule {
  ForestModel forest;
  FeatureKind feature_kind = FeatureKind::kDwd;
  FeatureSchema schema;
  // dr = 1 iff predict_proba >= cutoff.
  double cutoff = 0.5;
};

struct BuiltinPassthrough {};

struct DecisionRule {
  std::variant<RandomRule, ConfStdRule, LearnedRule, BuiltinPassthrough> kind;
  // Training context.
  std::optional<std::string> rif_kind;
  std::optional<std::string> train_benchmark;
  // Free-form provenance (tool version, seed, config hash) kept in rule files.
  nlohmann::json artifact;

  // "random", "confstd", "calibrator", "dwd", "builtin".
  std::string name() const;
  void validate() const;
};

struct Decision {
  std::string instance_id;
  int dr = 1;
  // Ordering score for risk-coverage: forest probability for learned rules,
  // conf_std itself for ConfStd, 0.5 for Random, 1 - abstain for builtin.
  double dr_confidence = 0.5;
  std::size_t selected_index = 0;
  // Filled by attach_correctness, never by decide.
  std::optional<bool> answered_correctly;
};

// Bernoulli(0.5) seeded by derive_seed(seed, instance_id).
Decision dr_random(const std::string& instance_id, std::uint64_t seed);

// Exhaustive sweep over {0, midpoints of consecutive distinct values, just
// above the max}; returns the training-accuracy maximizer, ties to the
// smallest threshold.
double fit_confstd_threshold(std::span<const double> stds, std::span<const int> labels);
double fit_confstd_threshold(std::span<const LabeledPair> train);

// Applies the rule. Never reads instance.gold_index.
Decision decide(const DecisionRule& rule, const Instance& instance, const ModelOutput& output,
                const Embedder& embed = fallback_embed);

// answered_correctly := (selected_index == gold_index) for unambiguous instances.
void attach_correctness(Decision& decision, const Instance& instance);

// Trains a learned rule on (instance, output) pairs labeled 1 iff unambiguous.
LearnedRule train_learned_rule(std::span<const InstanceOutput> train, FeatureKind kind,
                               const FeatureSchema& schema, const ForestParams& params,
                               double cutoff = 0.5, int workers = 1,
                               const Embedder& embed = fallback_embed);

ConfStdRule train_confstd_rule(std::span<const InstanceOutput> train);

// Learned rules are stored as forest model files with an extra "rule"
// object; ConfStd rules as {"kind": "confstd", "threshold": t}.
void save_rule(const DecisionRule& rule, const std::filesystem::path& path);
DecisionRule load_rule(const std::filesystem::path& path);

nlohmann::json to_json(const Decision& d);
Decision decision_from_json(const nlohmann::json& j);
void write_decisions(const std::filesystem::path& path, std::span<const Decision> decisions);
std::vector<Decision> load_decisions(const std::filesystem::path& path);

}  // namespace riskgate
