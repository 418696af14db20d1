#include "riskgate/rif.hpp"

#include <algorithm>
#include <map>

#include "riskgate/error.hpp"
#include "riskgate/random.hpp"

namespace riskgate {

namespace {

constexpr std::uint64_t kTagRange = 1'000'000;

bool contains(const std::vector<std::string>& choices, std::string_view text) {
  return std::find(choices.begin(), choices.end(), text) != choices.end();
}

}  // namespace

std::string to_string(RifKind kind) { return kind == RifKind::kWq ? "wq" : "nra"; }

RifKind parse_rif_kind(std::string_view text) {
  if (text == "wq") return RifKind::kWq;
  if (text == "nra") return RifKind::kNra;
  throw InputError("unknown RIF '" + std::string(text) + "' (expected wq or nra)");
}

ProvenanceKind provenance_of(RifKind kind) {
  return kind == RifKind::kWq ? ProvenanceKind::kRifWq : ProvenanceKind::kRifNra;
}

std::optional<RifKind> rif_of(const Provenance& p) {
  if (p.kind == ProvenanceKind::kRifWq) return RifKind::kWq;
  if (p.kind == ProvenanceKind::kRifNra) return RifKind::kNra;
  return std::nullopt;
}

Instance apply_wq(const Instance& target, const Instance& donor, std::uint64_t tag) {
  if (donor.id == target.id) throw InputError("WQ: donor is the target '" + target.id + "'");
  if (donor.benchmark != target.benchmark) {
    throw InputError("WQ: donor '" + donor.id + "' is from benchmark '" + donor.benchmark +
                     "', target from '" + target.benchmark + "'");
  }
  if (donor.prompt == target.prompt) {
    throw InputError("WQ: donor '" + donor.id + "' has the same prompt as '" + target.id + "'");
  }
  if (!target.provenance.is_original() || !donor.provenance.is_original()) {
    throw InputError("WQ: target and donor must both be original instances");
  }
  Instance out;
  out.id = target.id + "#wq" + std::to_string(tag);
  out.benchmark = target.benchmark;
  out.prompt = donor.prompt;
  out.choices = target.choices;
  out.ambiguous = true;
  out.provenance = {ProvenanceKind::kRifWq, 0};
  out.source_id = target.id;
  return out;
}

Instance apply_nra(const Instance& target, std::string_view donor_choice, std::uint64_t tag) {
  if (target.ambiguous || !target.gold_index) {
    throw InputError("NRA: target '" + target.id + "' is already ambiguous");
  }
  if (donor_choice.empty()) throw InputError("NRA: empty donor choice");
  if (contains(target.choices, donor_choice)) {
    throw InputError("NRA: donor choice '" + std::string(donor_choice) +
                     "' duplicates a choice of '" + target.id + "'");
  }
  Instance out;
  out.id = target.id + "#nra" + std::to_string(tag);
  out.benchmark = target.benchmark;
  out.prompt = target.prompt;
  out.choices = target.choices;
  out.choices[*target.gold_index] = std::string(donor_choice);
  out.ambiguous = true;
  out.provenance = {ProvenanceKind::kRifNra, 0};
  out.source_id = target.id;
  return out;
}

std::vector<LabeledInstance> build_balanced_set(std::span<const Instance> instances,
                                                RifKind rif, std::uint64_t seed) {
  if (instances.size() < 2) throw InputError("balanced set: need at least 2 instances");
  std::map<std::string, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    if (!inst.provenance.is_original() || inst.ambiguous) {
      throw InputError("balanced set: '" + inst.id + "' is not an unambiguous original");
    }
    buckets[inst.benchmark].push_back(i);
  }
  for (const auto& [bench, members] : buckets) {
    if (members.size() < 2) {
      throw InputError("balanced set: benchmark '" + bench +
                       "' has a single instance, no donor available");
    }
  }

  std::vector<LabeledInstance> out;
  out.reserve(2 * instances.size());
  for (std::size_t t = 0; t < instances.size(); ++t) {
    const Instance& target = instances[t];
    Rng rng(derive_seed(seed, target.id));
    std::vector<std::size_t> candidates;
    for (auto i : buckets.at(target.benchmark)) {
      if (i == t) continue;
      if (rif == RifKind::kWq && instances[i].prompt == target.prompt) continue;
      candidates.push_back(i);
    }

    Instance perturbed;
    if (rif == RifKind::kWq) {
      if (candidates.empty()) {
        throw InputError("WQ: no donor with a different prompt for '" + target.id + "'");
      }
      const Instance& donor = instances[candidates[rng.below(candidates.size())]];
      perturbed = apply_wq(target, donor, rng.below(kTagRange));
    } else {
      std::optional<std::string> choice;
      while (!choice) {
        if (candidates.empty()) {
          throw InputError("NRA: no donor offers a usable incorrect choice for '" +
                           target.id + "'");
        }
        const std::size_t pos = rng.below(candidates.size());
        const Instance& donor = instances[candidates[pos]];
        std::vector<const std::string*> usable;
        for (std::size_t c = 0; c < donor.choices.size(); ++c) {
          if (static_cast<int>(c) == *donor.gold_index) continue;
          if (contains(target.choices, donor.choices[c])) continue;
          usable.push_back(&donor.choices[c]);
        }
        if (usable.empty()) {
          candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(pos));
          continue;
        }
        choice = *usable[rng.below(usable.size())];
      }
      perturbed = apply_nra(target, *choice, rng.below(kTagRange));
    }
    out.push_back({target, 1});
    out.push_back({std::move(perturbed), 0});
  }
  return out;
}

}  // namespace riskgate
