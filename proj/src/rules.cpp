#include "riskgate/rules.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "riskgate/error.hpp"
#include "riskgate/random.hpp"

namespace riskgate {

using nlohmann::json;

namespace {

constexpr std::string_view kRuleFormat = "riskgate-rule";
constexpr std::string_view kForestFormat = "riskgate-forest";

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

json nullable(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

std::optional<std::string> optional_string(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<std::string>();
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": corrupt rule file: " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump() << '\n';
  if (!out) throw InputError("write failed: " + path.string());
}

void check_output(const Instance& instance, const ModelOutput& output) {
  if (output.instance_id != instance.id) {
    throw InputError("decide: output for '" + output.instance_id + "' applied to '" +
                     instance.id + "'");
  }
  if (output.confidences.size() != instance.choices.size()) {
    throw InputError("decide: confidence count does not match choices for '" + instance.id +
                     "'");
  }
}

}  // namespace

std::size_t select(std::span<const double> confidences) {
  if (confidences.empty()) throw InputError("select: empty confidence set");
  return static_cast<std::size_t>(std::max_element(confidences.begin(), confidences.end()) -
                                  confidences.begin());
}

std::string DecisionRule::name() const {
  return std::visit(overloaded{
                        [](const RandomRule&) -> std::string { return "random"; },
                        [](const ConfStdRule&) -> std::string { return "confstd"; },
                        [](const LearnedRule& r) { return to_string(r.feature_kind); },
                        [](const BuiltinPassthrough&) -> std::string { return "builtin"; },
                    },
                    kind);
}

void DecisionRule::validate() const {
  if (const auto* c = std::get_if<ConfStdRule>(&kind)) {
    if (!(c->threshold >= 0.0)) throw InputError("confstd rule: threshold must be >= 0");
  }
  if (const auto* l = std::get_if<LearnedRule>(&kind)) {
    if (!(l->cutoff > 0.0 && l->cutoff < 1.0)) {
      throw InputError("learned rule: cutoff must lie in (0, 1)");
    }
    l->schema.validate();
    if (l->schema.id(l->feature_kind) != l->forest.schema_id) {
      throw InputError("learned rule: forest schema '" + l->forest.schema_id +
                       "' does not match rule schema '" + l->schema.id(l->feature_kind) + "'");
    }
  }
}

Decision dr_random(const std::string& instance_id, std::uint64_t seed) {
  Decision d;
  d.instance_id = instance_id;
  d.dr = Rng(derive_seed(seed, instance_id)).coin() ? 1 : 0;
  d.dr_confidence = 0.5;
  return d;
}

double fit_confstd_threshold(std::span<const double> stds, std::span<const int> labels) {
  if (stds.size() != labels.size()) throw InputError("confstd fit: size mismatch");
  std::vector<std::pair<double, int>> items;
  items.reserve(stds.size());
  bool has0 = false, has1 = false;
  for (std::size_t i = 0; i < stds.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw InputError("confstd fit: labels must be 0/1");
    (labels[i] ? has1 : has0) = true;
    items.emplace_back(stds[i], labels[i]);
  }
  if (!has0 || !has1) throw InputError("confstd fit: training labels contain a single class");
  std::sort(items.begin(), items.end());

  std::set<double> candidates{0.0};
  for (std::size_t i = 0; i + 1 < items.size(); ++i) {
    if (items[i].first != items[i + 1].first) {
      candidates.insert(items[i].first + (items[i + 1].first - items[i].first) / 2);
    }
  }
  candidates.insert(std::nextafter(items.back().first, std::numeric_limits<double>::infinity()));

  std::size_t total_pos = 0;
  for (const auto& it : items) total_pos += static_cast<std::size_t>(it.second);

  // Walk candidates ascending; everything below the pointer is answered 0.
  std::size_t below = 0, below_neg = 0, below_pos = 0;
  std::size_t best_correct = 0;
  double best = 0.0;
  bool first = true;
  for (double t : candidates) {
    while (below < items.size() && items[below].first < t) {
      (items[below].second ? below_pos : below_neg)++;
      ++below;
    }
    const std::size_t correct = below_neg + (total_pos - below_pos);
    if (first || correct > best_correct) {
      best_correct = correct;
      best = t;
      first = false;
    }
  }
  return best;
}

double fit_confstd_threshold(std::span<const LabeledPair> train) {
  std::vector<double> stds;
  std::vector<int> labels;
  for (const auto& p : train) {
    stds.push_back(conf_std(p.output.confidences));
    labels.push_back(p.dr_label);
  }
  return fit_confstd_threshold(stds, labels);
}

Decision decide(const DecisionRule& rule, const Instance& instance, const ModelOutput& output,
                const Embedder& embed) {
  check_output(instance, output);
  Decision d;
  std::visit(overloaded{
                 [&](const RandomRule& r) { d = dr_random(instance.id, r.seed); },
                 [&](const ConfStdRule& r) {
                   d.dr_confidence = conf_std(output.confidences);
                   d.dr = d.dr_confidence >= r.threshold ? 1 : 0;
                 },
                 [&](const LearnedRule& r) {
                   const auto fv = extract(r.feature_kind, instance, output, r.schema, embed);
                   d.dr_confidence = predict_proba(r.forest, fv);
                   d.dr = d.dr_confidence >= r.cutoff ? 1 : 0;
                 },
                 [&](const BuiltinPassthrough&) {
                   if (!output.builtin_abstain) {
                     throw InputError("builtin rule: output for '" + instance.id +
                                      "' carries no builtin_abstain");
                   }
                   d.dr = *output.builtin_abstain ? 0 : 1;
                   d.dr_confidence = d.dr;
                 },
             },
             rule.kind);
  d.instance_id = instance.id;
  d.selected_index = select(output.confidences);
  return d;
}

void attach_correctness(Decision& decision, const Instance& instance) {
  if (decision.instance_id != instance.id) {
    throw InputError("decision for '" + decision.instance_id + "' attached to '" + instance.id +
                     "'");
  }
  if (instance.ambiguous || !instance.gold_index) {
    decision.answered_correctly.reset();
    return;
  }
  decision.answered_correctly =
      decision.selected_index == static_cast<std::size_t>(*instance.gold_index);
}

LearnedRule train_learned_rule(std::span<const InstanceOutput> train, FeatureKind kind,
                               const FeatureSchema& schema, const ForestParams& params,
                               double cutoff, int workers, const Embedder& embed) {
  std::vector<FeatureVector> x;
  std::vector<int> y;
  x.reserve(train.size());
  y.reserve(train.size());
  for (const auto& p : train) {
    x.push_back(extract(kind, *p.instance, *p.output, schema, embed));
    y.push_back(p.instance->ambiguous ? 0 : 1);
  }
  LearnedRule rule;
  rule.forest = train_forest(x, y, params, workers);
  rule.feature_kind = kind;
  rule.schema = schema;
  rule.cutoff = cutoff;
  return rule;
}

ConfStdRule train_confstd_rule(std::span<const InstanceOutput> train) {
  std::vector<double> stds;
  std::vector<int> labels;
  for (const auto& p : train) {
    stds.push_back(conf_std(p.output->confidences));
    labels.push_back(p.instance->ambiguous ? 0 : 1);
  }
  return {fit_confstd_threshold(stds, labels)};
}

void save_rule(const DecisionRule& rule, const std::filesystem::path& path) {
  rule.validate();
  json j;
  if (const auto* c = std::get_if<ConfStdRule>(&rule.kind)) {
    j = {{"format", kRuleFormat}, {"format_version", kModelFormatVersion},
         {"kind", "confstd"}, {"threshold", c->threshold}};
  } else if (const auto* l = std::get_if<LearnedRule>(&rule.kind)) {
    j = {{"format", kForestFormat}, {"format_version", kModelFormatVersion}};
    j["forest"] = forest_to_json(l->forest);
    j["rule"] = {{"kind", to_string(l->feature_kind)},
                 {"cutoff", l->cutoff},
                 {"k_max", l->schema.k_max},
                 {"embed_dim", l->schema.embed_dim},
                 {"include_embedding", l->schema.include_embedding}};
  } else {
    throw InputError("rule '" + rule.name() + "' needs no training and is not serialized");
  }
  j["rif_kind"] = nullable(rule.rif_kind);
  j["train_benchmark"] = nullable(rule.train_benchmark);
  if (!rule.artifact.is_null()) j["artifact"] = rule.artifact;
  write_json_file(path, j);
}

DecisionRule load_rule(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  if (!j.is_object()) throw InputError(path.string() + ": not a rule file");
  DecisionRule rule;
  const std::string format = j.value("format", "");
  try {
    if (format == kRuleFormat) {
      if (j.value("format_version", -1) != kModelFormatVersion) {
        throw InputError(path.string() + ": unsupported rule format_version");
      }
      if (j.at("kind").get<std::string>() != "confstd") {
        throw InputError(path.string() + ": unknown rule kind");
      }
      rule.kind = ConfStdRule{j.at("threshold").get<double>()};
      rule.rif_kind = optional_string(j, "rif_kind");
      rule.train_benchmark = optional_string(j, "train_benchmark");
    } else if (format == kForestFormat) {
      ModelHeader header;
      LearnedRule learned;
      learned.forest = load_model(path, &header);
      if (!j.contains("rule")) {
        throw InputError(path.string() + ": forest model carries no rule section");
      }
      const auto& r = j.at("rule");
      learned.feature_kind = parse_feature_kind(r.at("kind").get<std::string>());
      learned.cutoff = r.at("cutoff").get<double>();
      learned.schema.k_max = r.at("k_max").get<int>();
      learned.schema.embed_dim = r.at("embed_dim").get<int>();
      learned.schema.include_embedding = r.at("include_embedding").get<bool>();
      rule.kind = std::move(learned);
      rule.rif_kind = header.rif_kind;
      rule.train_benchmark = header.train_benchmark;
    } else {
      throw InputError(path.string() + ": not a rule file");
    }
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": corrupt rule file: " + e.what());
  }
  if (j.contains("artifact")) rule.artifact = j["artifact"];
  rule.validate();
  return rule;
}

json to_json(const Decision& d) {
  return {{"instance_id", d.instance_id},
          {"dr", d.dr},
          {"dr_confidence", d.dr_confidence},
          {"selected_index", d.selected_index}};
}

Decision decision_from_json(const json& j) {
  Decision d;
  d.instance_id = j.at("instance_id").get<std::string>();
  d.dr = j.at("dr").get<int>();
  d.dr_confidence = j.at("dr_confidence").get<double>();
  d.selected_index = j.at("selected_index").get<std::size_t>();
  if (d.dr != 0 && d.dr != 1) throw InputError("decision: dr must be 0 or 1");
  if (!std::isfinite(d.dr_confidence)) {
    throw InputError("decision: non-finite dr_confidence");
  }
  return d;
}

void write_decisions(const std::filesystem::path& path, std::span<const Decision> decisions) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& d : decisions) out << to_json(d).dump() << '\n';
  if (!out) throw InputError("write failed: " + path.string());
}

std::vector<Decision> load_decisions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<Decision> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(decision_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace riskgate
