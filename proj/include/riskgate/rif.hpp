#pragma once

// Risk injection functions: turn an answerable instance into one with no
// correct choice, and build balanced original/injected sets from them.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "riskgate/dataset.hpp"

namespace riskgate {

enum class RifKind { kWq, kNra };

std::string to_string(RifKind kind);  // "wq" / "nra"
RifKind parse_rif_kind(std::string_view text);
ProvenanceKind provenance_of(RifKind kind);
// RIF kind that produced an instance, if any.
std::optional<RifKind> rif_of(const Provenance& p);

// Wrong question: keep the target's choices, take the donor's prompt.
// The result id is "<target.id>#wq<tag>".
Instance apply_wq(const Instance& target, const Instance& donor, std::uint64_t tag = 0);

// No right answer: drop the gold choice and put donor_choice in its slot.
// The result id is "<target.id>#nra<tag>".
Instance apply_nra(const Instance& target, std::string_view donor_choice,
                   std::uint64_t tag = 0);

// For every input instance emits the original (label 1) followed by one
// perturbed counterpart (label 0). Donors come from the same benchmark,
// drawn with a per-instance RNG seeded by derive_seed(seed, target.id):
//   WQ:  donor uniform over same-benchmark instances whose prompt differs.
//   NRA: donor uniform over the remaining candidates; then one of the
//        donor's incorrect choices not already present in the target,
//        uniformly. Donors with no such choice are dropped and the donor
//        draw is repeated.
std::vector<LabeledInstance> build_balanced_set(std::span<const Instance> instances,
                                                RifKind rif, std::uint64_t seed);

}  // namespace riskgate
