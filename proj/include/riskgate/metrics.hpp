#pragma once

// Decision-risk and composite-risk statistics over rule decisions.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "riskgate/dataset.hpp"
#include "riskgate/rules.hpp"

namespace riskgate {

// Non-negative exact ratio, kept reduced.
struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static Fraction of(std::int64_t num, std::int64_t den);
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Fraction&, const Fraction&) = default;
};

//                 correct   incorrect
//   dr = 1 (ans)     a          b
//   dr = 0 (abst)    c          d
struct ContingencyTable {
  std::int64_t a = 0;
  std::int64_t b = 0;
  std::int64_t c = 0;
  std::int64_t d = 0;

  std::int64_t total() const { return a + b + c + d; }
  // Cases carrying composite risk: answered wrong or abstained-but-right.
  std::int64_t composite_risk() const { return b + c; }
  ContingencyTable& operator+=(const ContingencyTable& o);
  friend bool operator==(const ContingencyTable&, const ContingencyTable&) = default;
};

struct DecisionRiskAccuracy {
  // Fraction of instances where dr equals the unambiguity indicator.
  Fraction accuracy;
  std::int64_t n = 0;
  std::int64_t hits = 0;
};

DecisionRiskAccuracy decision_risk_accuracy(std::span<const Decision> decisions,
                                            std::span<const Instance> instances);

// Requires every instance to be unambiguous.
ContingencyTable composite_table(std::span<const Decision> decisions,
                                 std::span<const Instance> instances);

// a / (a + c) = P(answer | selection correct); nullopt when undefined.
std::optional<Fraction> sensitivity(const ContingencyTable& t);
// d / (b + d) = P(abstain | selection incorrect); nullopt when undefined.
std::optional<Fraction> specificity(const ContingencyTable& t);

struct RrrResult {
  // Exact ratio over the (possibly corrected) cells.
  Fraction ratio;
  double value = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  // 0.5 added to every cell because b or c was zero.
  bool corrected = false;

  bool significantly_below_one() const { return ci_high < 1.0; }
};

// [b/(a+b)] / [c/(c+d)] with a log-normal (Katz) interval. nullopt when the
// rule never answers or never abstains.
std::optional<RrrResult> rrr(const ContingencyTable& t, double confidence = 0.95);

struct Significance {
  double p_value = 1.0;
  std::string stars;
};

// Exact one-sided upper tail P(X >= successes), X ~ Binomial(n, p0).
// "**" for p < 0.05, "*" for p < 0.10.
Significance binomial_significance(std::int64_t successes, std::int64_t n, double p0 = 0.5);

struct SelectiveRisk {
  // b / N: 0/1 loss gated by dr, averaged over every instance.
  Fraction risk;
  // b / (a + b) when anything was answered.
  std::optional<Fraction> conditional;
};

SelectiveRisk selective_risk(const ContingencyTable& t);

struct CurvePoint {
  double coverage = 0.0;
  double risk = 0.0;
  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

// Decisions sorted by dr_confidence descending (ties by instance id); one
// point per prefix. Every decision must carry answered_correctly.
std::vector<CurvePoint> risk_coverage_curve(std::span<const Decision> decisions);

void write_curve_csv(const std::filesystem::path& path, std::span<const CurvePoint> curve);
void write_curve_svg(const std::filesystem::path& path, std::span<const CurvePoint> curve,
                     const std::string& title);

// Shortest round-trip decimal form.
std::string format_double(double v);

struct EvalReport {
  std::string mode;  // "decision" or "composite"
  std::string rule;
  std::optional<std::string> train_rif;
  std::optional<std::string> train_benchmark;
  std::string eval_benchmark;
  std::string domain;  // "ID", "OOD" or "n/a"
  std::uint64_t seed = 0;

  std::optional<DecisionRiskAccuracy> decision;
  std::optional<Significance> significance;

  std::optional<ContingencyTable> table;
  std::optional<Fraction> sensitivity;
  std::optional<Fraction> specificity;
  std::optional<RrrResult> rrr;
  std::optional<SelectiveRisk> selective;
  std::optional<Fraction> coverage;
};

nlohmann::json to_json(const EvalReport& report);
// key<TAB>value rows, stable key order.
std::string to_tsv(const EvalReport& report);

}  // namespace riskgate
