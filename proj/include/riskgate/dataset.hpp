#pragma once

// Instance / model-output data model and the line-delimited JSON
// interchange format (instances.jsonl, outputs.jsonl).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace riskgate {

enum class ProvenanceKind {
  kOriginal,
  kRifWq,
  kRifNra,
  kOverloadRandom,
  kOverloadHeuristic,
};

struct Provenance {
  ProvenanceKind kind = ProvenanceKind::kOriginal;
  // Choice count of an overloaded instance; 0 otherwise.
  int n = 0;

  bool is_original() const { return kind == ProvenanceKind::kOriginal; }
  bool is_rif() const {
    return kind == ProvenanceKind::kRifWq || kind == ProvenanceKind::kRifNra;
  }
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

// "original", "rif_wq", "rif_nra", "overload_random(5)", "overload_heuristic(10)".
std::string to_string(const Provenance& p);
Provenance parse_provenance(std::string_view text);

// One multiple-choice inference item.
struct Instance {
  std::string id;
  std::string benchmark;
  std::string prompt;
  std::vector<std::string> choices;
  std::optional<int> gold_index;
  // True iff no choice is correct. Stored explicitly, never inferred.
  bool ambiguous = false;
  Provenance provenance;
  std::optional<std::string> source_id;

  std::size_t num_choices() const { return choices.size(); }
  const std::string& gold_text() const { return choices.at(*gold_index); }

  friend bool operator==(const Instance&, const Instance&) = default;
};

// A black-box model's per-choice confidences for one instance.
struct ModelOutput {
  std::string instance_id;
  std::string model_id;
  std::vector<double> confidences;
  // The model's own refusal, when the model has one.
  std::optional<bool> builtin_abstain;
  std::optional<std::vector<double>> prompt_embedding;
  std::optional<std::vector<std::vector<double>>> choice_embeddings;

  friend bool operator==(const ModelOutput&, const ModelOutput&) = default;
};

struct InstanceOutput {
  const Instance* instance;
  const ModelOutput* output;
};

// Instance + training target (1 = risk-free original, 0 = risk-injected).
struct LabeledInstance {
  Instance instance;
  int dr_label = 1;
};

struct LabeledPair {
  Instance instance;
  ModelOutput output;
  int dr_label = 1;
};

// Throws InputError naming the id and offending field.
void validate(const Instance& instance);
void validate(const ModelOutput& output);

nlohmann::json to_json(const Instance& instance);
nlohmann::json to_json(const ModelOutput& output);
Instance instance_from_json(const nlohmann::json& j);
ModelOutput output_from_json(const nlohmann::json& j);

// Reads instances.jsonl. Blank lines are skipped. Rejects malformed lines
// (with line number), invariant violations, duplicate ids and exact
// duplicate content (same benchmark, prompt and choices).
std::vector<Instance> load_instances(const std::filesystem::path& path);
// Concatenation of several files with the same checks applied across them.
std::vector<Instance> load_instances(std::span<const std::filesystem::path> paths);
void write_instances(const std::filesystem::path& path,
                     std::span<const Instance> instances);

std::vector<ModelOutput> load_outputs(const std::filesystem::path& path);
std::vector<ModelOutput> load_outputs(std::span<const std::filesystem::path> paths);
void write_outputs(const std::filesystem::path& path,
                   std::span<const ModelOutput> outputs);

// Rescales confidences to sum to one. All-zero sets become uniform 1/K.
void normalize_confidences(ModelOutput& output);

// Pairs every instance with its output, in instance order. Missing outputs,
// outputs for unknown instances and confidence/choice count mismatches are
// all reported together in one InputError.
std::vector<InstanceOutput> join(std::span<const Instance> instances,
                                 std::span<const ModelOutput> outputs);

struct Split {
  std::vector<Instance> train;
  std::vector<Instance> eval;
};

// Seeded partition with |train| = round(train_fraction * N) when families
// allow it. Instances linked through source_id (within the list) always
// land on the same side.
Split split(std::span<const Instance> instances, double train_fraction,
            std::uint64_t seed);

}  // namespace riskgate
