#include "riskgate/overload.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "riskgate/error.hpp"
#include "riskgate/random.hpp"

namespace riskgate {

namespace {

void check_target(const Instance& target, int n) {
  if (n <= 1) throw InputError("overload: n must be > 1, got " + std::to_string(n));
  if (!target.gold_index) {
    throw InputError("overload: target '" + target.id + "' has no gold answer");
  }
}

// Gold + distractors, shuffled, as a fresh derived instance.
Instance assemble(const Instance& target, std::vector<std::string> distractors,
                  ProvenanceKind kind, int n, Rng& rng) {
  Instance out;
  out.id = target.id + (kind == ProvenanceKind::kOverloadRandom ? "#or" : "#oh") +
           std::to_string(n);
  out.benchmark = target.benchmark;
  out.prompt = target.prompt;
  out.choices.reserve(static_cast<std::size_t>(n));
  out.choices.push_back(target.gold_text());
  for (auto& d : distractors) out.choices.push_back(std::move(d));
  rng.shuffle(std::span(out.choices));
  const auto gold = std::find(out.choices.begin(), out.choices.end(), target.gold_text());
  out.gold_index = static_cast<int>(gold - out.choices.begin());
  out.ambiguous = false;
  out.provenance = {kind, n};
  out.source_id = target.id;
  return out;
}

}  // namespace

ChoicePool build_pool(std::span<const Instance> instances) {
  ChoicePool pool;
  for (const auto& inst : instances) {
    for (std::size_t c = 0; c < inst.choices.size(); ++c) {
      const bool gold = inst.gold_index && static_cast<std::size_t>(*inst.gold_index) == c;
      pool.entries.push_back({inst.choices[c], inst.id, gold});
    }
  }
  return pool;
}

std::string to_string(OverloadMethod m) {
  return m == OverloadMethod::kRandom ? "random" : "heuristic";
}

OverloadMethod parse_overload_method(std::string_view text) {
  if (text == "random") return OverloadMethod::kRandom;
  if (text == "heuristic") return OverloadMethod::kHeuristic;
  throw InputError("unknown overload method '" + std::string(text) + "'");
}

Instance expand_random(const Instance& target, const ChoicePool& pool, int n,
                       std::uint64_t seed) {
  check_target(target, n);
  const std::string& gold = target.gold_text();
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < pool.entries.size(); ++i) {
    const auto& e = pool.entries[i];
    if (e.owner_id != target.id && e.text != gold) eligible.push_back(i);
  }

  Rng rng(seed);
  const auto wanted = static_cast<std::size_t>(n - 1);
  std::vector<std::string> picked;
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < eligible.size() && picked.size() < wanted; ++i) {
    const std::size_t j = i + rng.below(eligible.size() - i);
    std::swap(eligible[i], eligible[j]);
    const std::string& text = pool.entries[eligible[i]].text;
    if (seen.insert(text).second) picked.push_back(text);
  }
  if (picked.size() < wanted) {
    throw InputError("overload: pool offers only " + std::to_string(picked.size()) +
                     " distinct distractors for '" + target.id + "', need " +
                     std::to_string(wanted));
  }
  return assemble(target, std::move(picked), ProvenanceKind::kOverloadRandom, n, rng);
}

HeuristicExpansion expand_heuristic_traced(const Instance& target,
                                           std::span<const Instance> corpus, int n,
                                           const Embedder& embed, std::uint64_t seed) {
  check_target(target, n);
  const Embedding target_emb = embed(target.prompt);

  // Similarity rounded to 12 decimals, so equal overlaps tie exactly.
  struct Ranked {
    std::int64_t sim;
    const Instance* inst;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(corpus.size());
  for (const auto& other : corpus) {
    if (other.id == target.id) continue;
    const Embedding emb = embed(other.prompt);
    if (emb.size() != target_emb.size()) {
      throw InputError("overload: embedding dimension mismatch for '" + other.id + "' (" +
                       std::to_string(emb.size()) + " vs " +
                       std::to_string(target_emb.size()) + ")");
    }
    ranked.push_back({std::llround(cosine(target_emb, emb) * 1e12), &other});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    return a.inst->id < b.inst->id;
  });

  Rng rng(seed);
  const std::string& gold = target.gold_text();
  const auto wanted = static_cast<std::size_t>(n - 1);
  HeuristicExpansion result;
  std::vector<std::string> picked;
  std::unordered_set<std::string_view> seen{gold};
  for (const auto& r : ranked) {
    if (picked.size() == wanted) break;
    const Instance& donor = *r.inst;
    std::vector<const std::string*> usable;
    for (std::size_t c = 0; c < donor.choices.size(); ++c) {
      if (donor.gold_index && static_cast<std::size_t>(*donor.gold_index) == c) continue;
      if (seen.contains(donor.choices[c])) continue;
      usable.push_back(&donor.choices[c]);
    }
    if (usable.empty()) continue;
    const std::string& choice = *usable[rng.below(usable.size())];
    seen.insert(choice);
    picked.push_back(choice);
    result.donor_ids.push_back(donor.id);
  }
  if (picked.size() < wanted) {
    throw InputError("overload: only " + std::to_string(picked.size()) +
                     " usable donors for '" + target.id + "', need " + std::to_string(wanted));
  }
  result.instance =
      assemble(target, std::move(picked), ProvenanceKind::kOverloadHeuristic, n, rng);
  return result;
}

Instance expand_heuristic(const Instance& target, std::span<const Instance> corpus, int n,
                          const Embedder& embed, std::uint64_t seed) {
  return expand_heuristic_traced(target, corpus, n, embed, seed).instance;
}

std::vector<std::vector<Instance>> build_overload_eval(std::span<const Instance> instances,
                                                       const OverloadConfig& config,
                                                       const Embedder& embed) {
  if (config.trials < 1) throw InputError("overload: trials must be >= 1");
  if (config.per_trial < 1) throw InputError("overload: per_trial must be >= 1");
  if (static_cast<std::size_t>(config.per_trial) > instances.size()) {
    throw InputError("overload: per_trial " + std::to_string(config.per_trial) + " exceeds " +
                     std::to_string(instances.size()) + " instances");
  }
  if (config.n <= 1) throw InputError("overload: n must be > 1");
  for (const auto& inst : instances) {
    if (!inst.gold_index) {
      throw InputError("overload: '" + inst.id + "' has no gold answer");
    }
  }

  std::map<std::string, std::vector<Instance>> by_benchmark;
  for (const auto& inst : instances) by_benchmark[inst.benchmark].push_back(inst);
  std::map<std::string, ChoicePool> pools;
  for (const auto& [bench, members] : by_benchmark) pools[bench] = build_pool(members);

  std::unordered_map<std::string, Embedding> cache;
  const Embedder cached = [&](std::string_view text) {
    auto it = cache.find(std::string(text));
    if (it == cache.end()) it = cache.emplace(std::string(text), embed(text)).first;
    return it->second;
  };

  std::vector<std::vector<Instance>> trials;
  for (int t = 0; t < config.trials; ++t) {
    const std::uint64_t trial_seed = derive_seed(config.seed, static_cast<std::uint64_t>(t));
    Rng rng(trial_seed);
    std::vector<std::size_t> order(instances.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<Instance> trial;
    for (int k = 0; k < config.per_trial; ++k) {
      const auto i = static_cast<std::size_t>(k);
      std::swap(order[i], order[i + rng.below(order.size() - i)]);
      const Instance& base = instances[order[i]];
      const std::uint64_t s = derive_seed(trial_seed, base.id);
      if (config.method == OverloadMethod::kRandom) {
        trial.push_back(expand_random(base, pools.at(base.benchmark), config.n, s));
      } else {
        trial.push_back(
            expand_heuristic(base, by_benchmark.at(base.benchmark), config.n, cached, s));
      }
    }
    trials.push_back(std::move(trial));
  }
  return trials;
}

std::string overload_file_name(OverloadMethod method, int n, int trial) {
  return "overload_" + to_string(method) + "_n" + std::to_string(n) + "_t" +
         std::to_string(trial) + ".jsonl";
}

}  // namespace riskgate
