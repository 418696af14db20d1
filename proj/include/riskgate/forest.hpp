#pragma once

// Random-forest binary classifier: bootstrap-sampled Gini trees with
// axis-aligned threshold splits, probability = mean positive-leaf fraction.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "riskgate/features.hpp"

namespace riskgate {

struct ForestParams {
  int n_trees = 200;
  int max_depth = 12;
  int min_leaf = 2;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

// floor(sqrt(F)), at least 1.
int features_per_split(std::size_t num_features);

// Flat array tree. Node i is a leaf iff feature[i] < 0; otherwise samples
// with x[feature] <= threshold go to left[i], the rest to right[i].
struct DecisionTree {
  std::vector<int> feature;
  std::vector<double> threshold;
  std::vector<int> left;
  std::vector<int> right;
  // Positive-class fraction at leaves; unused on internal nodes.
  std::vector<double> value;

  std::size_t size() const { return feature.size(); }
  double predict(std::span<const double> x) const;

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  std::string schema_id;
  std::size_t num_features = 0;
  ForestParams params;

  friend bool operator==(const ForestModel&, const ForestModel&) = default;
};

// Gini impurity of a node holding `positives` positives out of `total`.
double gini(std::size_t positives, std::size_t total);

// Trees are seeded by derive_seed(params.seed, tree_index) and may be built
// on up to `workers` threads; the result does not depend on workers.
ForestModel train_forest(std::span<const FeatureVector> x, std::span<const int> y,
                         const ForestParams& params, int workers = 1);

double predict_proba(const ForestModel& model, const FeatureVector& x);

// JSON body shared by model and rule files.
nlohmann::json forest_to_json(const ForestModel& model);
ForestModel forest_from_json(const nlohmann::json& j);

// Training context recorded in model file headers.
struct ModelHeader {
  std::optional<std::string> rif_kind;
  std::optional<std::string> train_benchmark;
};

inline constexpr int kModelFormatVersion = 1;

void save_model(const ForestModel& model, const std::filesystem::path& path,
                const ModelHeader& header = {});
ForestModel load_model(const std::filesystem::path& path, ModelHeader* header = nullptr);

}  // namespace riskgate
