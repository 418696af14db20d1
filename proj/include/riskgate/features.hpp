#pragma once

// Fixed-schema feature vectors for the learned decision rules, plus the
// deterministic hashed-trigram text embedder used when no embeddings are
// supplied with the model outputs.

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "riskgate/dataset.hpp"

namespace riskgate {

using Embedding = std::vector<double>;
using Embedder = std::function<Embedding(std::string_view)>;

inline constexpr std::size_t kFallbackEmbedDim = 256;

struct FeatureVector {
  std::vector<double> values;
  std::string schema_id;
};

enum class FeatureKind { kCalibrator, kDwd };

struct FeatureSchema {
  // Confidence and similarity slots.
  int k_max = 4;
  int embed_dim = static_cast<int>(kFallbackEmbedDim);
  bool include_embedding = false;

  void validate() const;
  // Feature count under the given layout.
  std::size_t size(FeatureKind kind) const;
  // "calibrator-<k>", "dwd-<k>", or "dwd-<k>-<d>" with the embedding.
  std::string id(FeatureKind kind) const;
};

// Population standard deviation. Throws for fewer than 2 values.
double conf_std(std::span<const double> values);

// Cosine similarity; 0 when either vector is all zeros.
double cosine(std::span<const double> a, std::span<const double> b);

// Hashed character-trigram counts over the ASCII-lowercased UTF-8 bytes,
// bucketed by 32-bit FNV-1a of the trigram modulo 256, L2-normalized.
// Texts shorter than 3 bytes map to the zero vector.
Embedding fallback_embed(std::string_view text);

// Text length in Unicode code points.
std::size_t char_length(std::string_view utf8);

// Layout: prompt length, predicted-answer length, top-k confidences
// (descending, zero-padded), conf_std over all K, top-k prompt/choice
// cosine similarities (descending, zero-padded), population std of all K
// similarities, then the prompt embedding when the schema includes it.
// Embeddings come from the output when present, otherwise from embed.
FeatureVector extract_features(const Instance& instance, const ModelOutput& output,
                               const FeatureSchema& schema, const Embedder& embed);

// Prompt length, predicted-answer length, top-k confidences.
FeatureVector extract_calibrator_features(const Instance& instance, const ModelOutput& output,
                                          const FeatureSchema& schema);

FeatureVector extract(FeatureKind kind, const Instance& instance, const ModelOutput& output,
                      const FeatureSchema& schema, const Embedder& embed);

std::string to_string(FeatureKind kind);
FeatureKind parse_feature_kind(std::string_view text);

}  // namespace riskgate
