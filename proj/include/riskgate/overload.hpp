#pragma once

// Choice-overload stress sets: expand an instance's candidate set to n
// choices with distractors drawn from other instances.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "riskgate/dataset.hpp"
#include "riskgate/features.hpp"

namespace riskgate {

struct PoolEntry {
  std::string text;
  std::string owner_id;
  bool is_gold_of_owner = false;
};

struct ChoicePool {
  std::vector<PoolEntry> entries;
};

// Every choice of every instance, in file order.
ChoicePool build_pool(std::span<const Instance> instances);

enum class OverloadMethod { kRandom, kHeuristic };

std::string to_string(OverloadMethod m);
OverloadMethod parse_overload_method(std::string_view text);

// Gold answer plus n-1 distinct distractors drawn uniformly without
// replacement from pool entries owned by other instances (entries repeating
// the gold text or an already drawn text are passed over), then shuffled.
Instance expand_random(const Instance& target, const ChoicePool& pool, int n,
                       std::uint64_t seed);

struct HeuristicExpansion {
  Instance instance;
  // Donors actually used, in rank order.
  std::vector<std::string> donor_ids;
};

// Donors ranked by prompt-embedding cosine similarity to the target, rounded
// to 12 decimals (descending, ties by ascending id); one incorrect choice is taken from
// each of the first n-1 donors that still offer a new text.
HeuristicExpansion expand_heuristic_traced(const Instance& target,
                                           std::span<const Instance> corpus, int n,
                                           const Embedder& embed, std::uint64_t seed);

Instance expand_heuristic(const Instance& target, std::span<const Instance> corpus, int n,
                          const Embedder& embed, std::uint64_t seed);

struct OverloadConfig {
  int n = 5;
  OverloadMethod method = OverloadMethod::kRandom;
  int trials = 3;
  int per_trial = 50;
  std::uint64_t seed = 0;
};

// trials independent samples of per_trial base instances; trial t samples
// with derive_seed(seed, t) and expands each base instance b with
// derive_seed(that, b.id). Pools and donor corpora are restricted to the
// target's benchmark.
std::vector<std::vector<Instance>> build_overload_eval(std::span<const Instance> instances,
                                                       const OverloadConfig& config,
                                                       const Embedder& embed);

// overload_<method>_n<n>_t<trial>.jsonl
std::string overload_file_name(OverloadMethod method, int n, int trial);

}  // namespace riskgate
