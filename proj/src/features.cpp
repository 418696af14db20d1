#include "riskgate/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>

#include "riskgate/error.hpp"

namespace riskgate {

namespace {

std::uint32_t fnv1a32(std::string_view bytes) {
  std::uint32_t h = 2166136261u;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 16777619u;
  }
  return h;
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) -
                                  values.begin());
}

void push_top_k(std::vector<double>& dst, std::vector<double> values, int k) {
  std::sort(values.begin(), values.end(), std::greater<>());
  values.resize(static_cast<std::size_t>(k), 0.0);
  dst.insert(dst.end(), values.begin(), values.end());
}

void push_lengths(std::vector<double>& dst, const Instance& inst, const ModelOutput& out) {
  if (out.confidences.size() != inst.choices.size()) {
    throw InputError("features: output for '" + inst.id +
                     "' does not match the instance's choice count");
  }
  dst.push_back(static_cast<double>(char_length(inst.prompt)));
  dst.push_back(static_cast<double>(char_length(inst.choices[argmax(out.confidences)])));
}

}  // namespace

void FeatureSchema::validate() const {
  if (k_max < 2) throw InputError("feature schema: k_max must be >= 2");
  if (include_embedding && embed_dim <= 0) {
    throw InputError("feature schema: embed_dim must be > 0 when the embedding is included");
  }
}

std::size_t FeatureSchema::size(FeatureKind kind) const {
  const auto k = static_cast<std::size_t>(k_max);
  if (kind == FeatureKind::kCalibrator) return 2 + k;
  return 2 + k + 1 + k + 1 + (include_embedding ? static_cast<std::size_t>(embed_dim) : 0);
}

std::string FeatureSchema::id(FeatureKind kind) const {
  if (kind == FeatureKind::kCalibrator) return "calibrator-" + std::to_string(k_max);
  std::string s = "dwd-" + std::to_string(k_max);
  if (include_embedding) s += "-" + std::to_string(embed_dim);
  return s;
}

double conf_std(std::span<const double> values) {
  if (values.size() < 2) throw InputError("conf_std: need at least 2 values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / n);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InputError("cosine: dimension mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

Embedding fallback_embed(std::string_view text) {
  Embedding v(kFallbackEmbedDim, 0.0);
  if (text.size() < 3) return v;
  std::string lower(text);
  for (char& c : lower) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  for (std::size_t i = 0; i + 3 <= lower.size(); ++i) {
    v[fnv1a32(std::string_view(lower).substr(i, 3)) % kFallbackEmbedDim] += 1.0;
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::size_t char_length(std::string_view utf8) {
  return static_cast<std::size_t>(std::count_if(utf8.begin(), utf8.end(), [](char c) {
    return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
  }));
}

FeatureVector extract_calibrator_features(const Instance& instance, const ModelOutput& output,
                                          const FeatureSchema& schema) {
  schema.validate();
  FeatureVector fv;
  fv.schema_id = schema.id(FeatureKind::kCalibrator);
  fv.values.reserve(schema.size(FeatureKind::kCalibrator));
  push_lengths(fv.values, instance, output);
  push_top_k(fv.values, output.confidences, schema.k_max);
  return fv;
}

FeatureVector extract_features(const Instance& instance, const ModelOutput& output,
                               const FeatureSchema& schema, const Embedder& embed) {
  schema.validate();
  FeatureVector fv;
  fv.schema_id = schema.id(FeatureKind::kDwd);
  fv.values.reserve(schema.size(FeatureKind::kDwd));
  push_lengths(fv.values, instance, output);
  push_top_k(fv.values, output.confidences, schema.k_max);
  fv.values.push_back(conf_std(output.confidences));

  const Embedding prompt_emb =
      output.prompt_embedding ? *output.prompt_embedding : embed(instance.prompt);
  std::vector<double> sims;
  sims.reserve(instance.choices.size());
  for (std::size_t c = 0; c < instance.choices.size(); ++c) {
    const Embedding choice_emb = output.choice_embeddings ? (*output.choice_embeddings)[c]
                                                          : embed(instance.choices[c]);
    if (choice_emb.size() != prompt_emb.size()) {
      throw InputError("features: '" + instance.id + "' choice embedding dimension " +
                       std::to_string(choice_emb.size()) + " differs from prompt dimension " +
                       std::to_string(prompt_emb.size()));
    }
    sims.push_back(cosine(prompt_emb, choice_emb));
  }
  push_top_k(fv.values, sims, schema.k_max);
  fv.values.push_back(conf_std(sims));

  if (schema.include_embedding) {
    if (prompt_emb.size() != static_cast<std::size_t>(schema.embed_dim)) {
      throw InputError("features: '" + instance.id + "' prompt embedding dimension " +
                       std::to_string(prompt_emb.size()) + " does not match schema " +
                       fv.schema_id);
    }
    fv.values.insert(fv.values.end(), prompt_emb.begin(), prompt_emb.end());
  }
  for (double v : fv.values) {
    if (!std::isfinite(v)) throw InputError("features: non-finite value for '" + instance.id + "'");
  }
  return fv;
}

FeatureVector extract(FeatureKind kind, const Instance& instance, const ModelOutput& output,
                      const FeatureSchema& schema, const Embedder& embed) {
  return kind == FeatureKind::kCalibrator ? extract_calibrator_features(instance, output, schema)
                                          : extract_features(instance, output, schema, embed);
}

std::string to_string(FeatureKind kind) {
  return kind == FeatureKind::kCalibrator ? "calibrator" : "dwd";
}

FeatureKind parse_feature_kind(std::string_view text) {
  if (text == "calibrator") return FeatureKind::kCalibrator;
  if (text == "dwd") return FeatureKind::kDwd;
  throw InputError("unknown feature kind '" + std::string(text) + "'");
}

}  // namespace riskgate
