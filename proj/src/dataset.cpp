#include "riskgate/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "riskgate/error.hpp"
#include "riskgate/random.hpp"

namespace riskgate {

using nlohmann::json;

namespace {

constexpr std::string_view kOverloadRandom = "overload_random";
constexpr std::string_view kOverloadHeuristic = "overload_heuristic";

[[noreturn]] void fail(const std::string& id, const std::string& msg) {
  throw InputError("instance '" + id + "': " + msg);
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

template <typename T>
T required_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    throw InputError(std::string("missing field '") + key + "'");
  }
  return it->get<T>();
}

template <typename Record, typename Parse>
std::vector<Record> read_jsonl(const std::filesystem::path& path, Parse parse) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<Record> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(parse(json::parse(line)));
    } catch (const json::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": " +
                       e.what());
    } catch (const InputError& e) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": " +
                       e.what());
    }
  }
  return records;
}

template <typename Record>
void write_jsonl(const std::filesystem::path& path, std::span<const Record> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << '\n';
  if (!out) throw InputError("write failed: " + path.string());
}

void check_unique(std::span<const Instance> instances) {
  std::unordered_set<std::string> ids;
  std::set<std::tuple<std::string, std::string, std::vector<std::string>>> contents;
  for (const auto& inst : instances) {
    if (!ids.insert(inst.id).second) fail(inst.id, "duplicate id");
    if (!contents.emplace(inst.benchmark, inst.prompt, inst.choices).second) {
      fail(inst.id, "exact duplicate of an earlier instance (benchmark, prompt, choices)");
    }
  }
}

}  // namespace

std::string to_string(const Provenance& p) {
  switch (p.kind) {
    case ProvenanceKind::kOriginal:
      return "original";
    case ProvenanceKind::kRifWq:
      return "rif_wq";
    case ProvenanceKind::kRifNra:
      return "rif_nra";
    case ProvenanceKind::kOverloadRandom:
      return std::string(kOverloadRandom) + "(" + std::to_string(p.n) + ")";
    case ProvenanceKind::kOverloadHeuristic:
      return std::string(kOverloadHeuristic) + "(" + std::to_string(p.n) + ")";
  }
  return "?";
}

Provenance parse_provenance(std::string_view text) {
  if (text == "original") return {ProvenanceKind::kOriginal, 0};
  if (text == "rif_wq") return {ProvenanceKind::kRifWq, 0};
  if (text == "rif_nra") return {ProvenanceKind::kRifNra, 0};
  for (auto [prefix, kind] : {std::pair{kOverloadRandom, ProvenanceKind::kOverloadRandom},
                              std::pair{kOverloadHeuristic, ProvenanceKind::kOverloadHeuristic}}) {
    if (text.size() > prefix.size() + 2 && text.substr(0, prefix.size()) == prefix &&
        text[prefix.size()] == '(' && text.back() == ')') {
      auto digits = text.substr(prefix.size() + 1, text.size() - prefix.size() - 2);
      int n = 0;
      auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
      if (ec == std::errc() && ptr == digits.data() + digits.size() && n >= 2) {
        return {kind, n};
      }
    }
  }
  throw InputError("unknown provenance '" + std::string(text) + "'");
}

void validate(const Instance& inst) {
  if (inst.id.empty()) throw InputError("instance with empty id");
  const auto k = inst.choices.size();
  if (k < 2) fail(inst.id, "choices: need at least 2, got " + std::to_string(k));
  std::unordered_set<std::string_view> seen;
  for (const auto& c : inst.choices) {
    if (c.empty()) fail(inst.id, "choices: empty choice text");
    if (!seen.insert(c).second) fail(inst.id, "choices: duplicate choice '" + c + "'");
  }
  if (inst.ambiguous && inst.gold_index) {
    fail(inst.id, "gold_index: present on an ambiguous instance");
  }
  if (!inst.ambiguous) {
    if (!inst.gold_index) fail(inst.id, "gold_index: missing on an unambiguous instance");
    if (*inst.gold_index < 0 || static_cast<std::size_t>(*inst.gold_index) >= k) {
      fail(inst.id, "gold_index: " + std::to_string(*inst.gold_index) +
                        " out of range for " + std::to_string(k) + " choices");
    }
  }
  if (inst.provenance.is_original()) {
    if (inst.source_id) fail(inst.id, "source_id: must be absent for provenance original");
  } else {
    if (!inst.source_id) fail(inst.id, "source_id: required for derived provenance");
    if (*inst.source_id == inst.id) fail(inst.id, "source_id: equals own id");
  }
}

void validate(const ModelOutput& out) {
  const std::string who = "output for '" + out.instance_id + "': ";
  if (out.instance_id.empty()) throw InputError("output with empty instance_id");
  for (double c : out.confidences) {
    if (!std::isfinite(c) || c < 0) {
      throw InputError(who + "confidences: negative or non-finite value");
    }
  }
  std::optional<std::size_t> dim;
  auto check_dim = [&](const std::vector<double>& v, const char* field) {
    if (v.empty()) throw InputError(who + field + ": empty embedding");
    if (dim && *dim != v.size()) {
      throw InputError(who + field + ": embedding dimension " + std::to_string(v.size()) +
                       " differs from " + std::to_string(*dim));
    }
    dim = v.size();
  };
  if (out.prompt_embedding) check_dim(*out.prompt_embedding, "prompt_embedding");
  if (out.choice_embeddings) {
    if (out.choice_embeddings->size() != out.confidences.size()) {
      throw InputError(who + "choice_embeddings: count differs from confidences");
    }
    for (const auto& e : *out.choice_embeddings) check_dim(e, "choice_embeddings");
  }
}

json to_json(const Instance& inst) {
  json j;
  j["id"] = inst.id;
  j["benchmark"] = inst.benchmark;
  j["prompt"] = inst.prompt;
  j["choices"] = inst.choices;
  j["gold_index"] = inst.gold_index ? json(*inst.gold_index) : json(nullptr);
  j["ambiguous"] = inst.ambiguous;
  j["provenance"] = to_string(inst.provenance);
  j["source_id"] = inst.source_id ? json(*inst.source_id) : json(nullptr);
  return j;
}

json to_json(const ModelOutput& out) {
  json j;
  j["instance_id"] = out.instance_id;
  j["model_id"] = out.model_id;
  j["confidences"] = out.confidences;
  j["builtin_abstain"] = out.builtin_abstain ? json(*out.builtin_abstain) : json(nullptr);
  j["prompt_embedding"] = out.prompt_embedding ? json(*out.prompt_embedding) : json(nullptr);
  j["choice_embeddings"] =
      out.choice_embeddings ? json(*out.choice_embeddings) : json(nullptr);
  return j;
}

Instance instance_from_json(const json& j) {
  if (!j.is_object()) throw InputError("record is not a JSON object");
  Instance inst;
  inst.id = required_field<std::string>(j, "id");
  try {
    inst.benchmark = required_field<std::string>(j, "benchmark");
    inst.prompt = required_field<std::string>(j, "prompt");
    inst.choices = required_field<std::vector<std::string>>(j, "choices");
    inst.gold_index = optional_field<int>(j, "gold_index");
    inst.ambiguous = required_field<bool>(j, "ambiguous");
    inst.provenance = parse_provenance(required_field<std::string>(j, "provenance"));
    inst.source_id = optional_field<std::string>(j, "source_id");
  } catch (const json::exception& e) {
    fail(inst.id, e.what());
  } catch (const InputError& e) {
    fail(inst.id, e.what());
  }
  validate(inst);
  return inst;
}

ModelOutput output_from_json(const json& j) {
  if (!j.is_object()) throw InputError("record is not a JSON object");
  ModelOutput out;
  out.instance_id = required_field<std::string>(j, "instance_id");
  out.model_id = required_field<std::string>(j, "model_id");
  out.confidences = required_field<std::vector<double>>(j, "confidences");
  out.builtin_abstain = optional_field<bool>(j, "builtin_abstain");
  out.prompt_embedding = optional_field<std::vector<double>>(j, "prompt_embedding");
  out.choice_embeddings =
      optional_field<std::vector<std::vector<double>>>(j, "choice_embeddings");
  validate(out);
  return out;
}

std::vector<Instance> load_instances(const std::filesystem::path& path) {
  auto instances = read_jsonl<Instance>(path, instance_from_json);
  check_unique(instances);
  return instances;
}

std::vector<Instance> load_instances(std::span<const std::filesystem::path> paths) {
  std::vector<Instance> all;
  for (const auto& p : paths) {
    auto part = read_jsonl<Instance>(p, instance_from_json);
    all.insert(all.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  check_unique(all);
  return all;
}

void write_instances(const std::filesystem::path& path, std::span<const Instance> instances) {
  write_jsonl(path, instances);
}

std::vector<ModelOutput> load_outputs(const std::filesystem::path& path) {
  return read_jsonl<ModelOutput>(path, output_from_json);
}

std::vector<ModelOutput> load_outputs(std::span<const std::filesystem::path> paths) {
  std::vector<ModelOutput> all;
  for (const auto& p : paths) {
    auto part = load_outputs(p);
    all.insert(all.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return all;
}

void write_outputs(const std::filesystem::path& path, std::span<const ModelOutput> outputs) {
  write_jsonl(path, outputs);
}

void normalize_confidences(ModelOutput& output) {
  const double total = std::accumulate(output.confidences.begin(), output.confidences.end(), 0.0);
  const double k = static_cast<double>(output.confidences.size());
  for (double& c : output.confidences) c = total > 0 ? c / total : 1.0 / k;
}

std::vector<InstanceOutput> join(std::span<const Instance> instances,
                                 std::span<const ModelOutput> outputs) {
  std::unordered_map<std::string_view, const ModelOutput*> by_id;
  std::vector<std::string> problems;
  for (const auto& o : outputs) {
    if (!by_id.emplace(o.instance_id, &o).second) {
      problems.push_back("duplicate output for '" + o.instance_id + "'");
    }
  }
  std::unordered_set<std::string_view> known;
  std::vector<InstanceOutput> pairs;
  pairs.reserve(instances.size());
  for (const auto& inst : instances) {
    known.insert(inst.id);
    auto it = by_id.find(inst.id);
    if (it == by_id.end()) {
      problems.push_back("no output for instance '" + inst.id + "'");
      continue;
    }
    if (it->second->confidences.size() != inst.choices.size()) {
      problems.push_back("output for '" + inst.id + "' has " +
                         std::to_string(it->second->confidences.size()) +
                         " confidences but the instance has " +
                         std::to_string(inst.choices.size()) + " choices");
      continue;
    }
    pairs.push_back({&inst, it->second});
  }
  for (const auto& o : outputs) {
    if (!known.contains(o.instance_id)) {
      problems.push_back("output references unknown instance '" + o.instance_id + "'");
    }
  }
  if (!problems.empty()) {
    std::string msg = "join failed:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw InputError(msg);
  }
  return pairs;
}

Split split(std::span<const Instance> instances, double train_fraction, std::uint64_t seed) {
  if (instances.empty()) throw InputError("split: empty instance list");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InputError("split: train_fraction must lie in (0, 1)");
  }
  const std::size_t n = instances.size();

  // Union-find over source_id links to the roots of each family.
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index.emplace(instances[i].id, i);
  for (std::size_t i = 0; i < n; ++i) {
    if (!instances[i].source_id) continue;
    auto it = index.find(*instances[i].source_id);
    if (it != index.end()) parent[find(i)] = find(it->second);
  }

  // Families in order of first appearance.
  std::vector<std::vector<std::size_t>> families;
  std::unordered_map<std::size_t, std::size_t> family_of_root;
  for (std::size_t i = 0; i < n; ++i) {
    auto [it, inserted] = family_of_root.emplace(find(i), families.size());
    if (inserted) families.emplace_back();
    families[it->second].push_back(i);
  }

  Rng rng(seed);
  rng.shuffle(std::span(families));

  const auto target = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  std::vector<bool> in_train(n, false);
  std::size_t train_size = 0;
  for (const auto& fam : families) {
    if (train_size + fam.size() > target) continue;
    for (auto i : fam) in_train[i] = true;
    train_size += fam.size();
  }
  if (train_size == 0 || train_size == n) {
    throw InputError("split: train_fraction " + std::to_string(train_fraction) + " over " +
                     std::to_string(n) + " instances leaves one side empty");
  }

  Split out;
  for (std::size_t i = 0; i < n; ++i) {
    (in_train[i] ? out.train : out.eval).push_back(instances[i]);
  }
  return out;
}

}  // namespace riskgate
