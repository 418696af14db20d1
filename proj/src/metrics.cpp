#include "riskgate/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "riskgate/error.hpp"

namespace riskgate {

using nlohmann::json;

namespace {

std::unordered_map<std::string_view, const Decision*> index_decisions(
    std::span<const Decision> decisions, std::span<const Instance> instances) {
  std::unordered_map<std::string_view, const Decision*> by_id;
  for (const auto& d : decisions) {
    if (!by_id.emplace(d.instance_id, &d).second) {
      throw InputError("metrics: duplicate decision for '" + d.instance_id + "'");
    }
  }
  if (by_id.size() != instances.size()) {
    std::unordered_map<std::string_view, bool> known;
    for (const auto& inst : instances) known.emplace(inst.id, true);
    for (const auto& d : decisions) {
      if (!known.contains(d.instance_id)) {
        throw InputError("metrics: decision for unknown instance '" + d.instance_id + "'");
      }
    }
  }
  return by_id;
}

const Decision& lookup(const std::unordered_map<std::string_view, const Decision*>& by_id,
                       const Instance& inst) {
  auto it = by_id.find(inst.id);
  if (it == by_id.end()) throw InputError("metrics: no decision for '" + inst.id + "'");
  return *it->second;
}

json fraction_json(const std::optional<Fraction>& f) {
  if (!f) return nullptr;
  return {{"value", f->value()}, {"num", f->num}, {"den", f->den}};
}

}  // namespace

Fraction Fraction::of(std::int64_t num, std::int64_t den) {
  if (den <= 0 || num < 0) throw std::logic_error("Fraction: invalid operands");
  const std::int64_t g = std::gcd(num, den);
  return {num / g, den / g};
}

ContingencyTable& ContingencyTable::operator+=(const ContingencyTable& o) {
  a += o.a;
  b += o.b;
  c += o.c;
  d += o.d;
  return *this;
}

DecisionRiskAccuracy decision_risk_accuracy(std::span<const Decision> decisions,
                                            std::span<const Instance> instances) {
  if (instances.empty()) throw InputError("decision risk: no instances");
  const auto by_id = index_decisions(decisions, instances);
  DecisionRiskAccuracy r;
  for (const auto& inst : instances) {
    const int indicator = inst.ambiguous ? 0 : 1;
    if (lookup(by_id, inst).dr == indicator) ++r.hits;
    ++r.n;
  }
  r.accuracy = Fraction::of(r.hits, r.n);
  return r;
}

ContingencyTable composite_table(std::span<const Decision> decisions,
                                 std::span<const Instance> instances) {
  const auto by_id = index_decisions(decisions, instances);
  ContingencyTable t;
  for (const auto& inst : instances) {
    if (inst.ambiguous || !inst.gold_index) {
      throw InputError("composite risk: instance '" + inst.id +
                       "' is ambiguous; composite risk is defined on unambiguous instances only");
    }
    const Decision& d = lookup(by_id, inst);
    const bool correct = d.selected_index == static_cast<std::size_t>(*inst.gold_index);
    if (d.dr == 1) {
      ++(correct ? t.a : t.b);
    } else {
      ++(correct ? t.c : t.d);
    }
  }
  return t;
}

std::optional<Fraction> sensitivity(const ContingencyTable& t) {
  if (t.a + t.c == 0) return std::nullopt;
  return Fraction::of(t.a, t.a + t.c);
}

std::optional<Fraction> specificity(const ContingencyTable& t) {
  if (t.b + t.d == 0) return std::nullopt;
  return Fraction::of(t.d, t.b + t.d);
}

std::optional<RrrResult> rrr(const ContingencyTable& t, double confidence) {
  if (t.a + t.b == 0 || t.c + t.d == 0) return std::nullopt;
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw InputError("rrr: confidence must lie in (0, 1)");
  }
  RrrResult r;
  r.corrected = t.b == 0 || t.c == 0;
  // Cells doubled so the Haldane-Anscombe half stays integral.
  const std::int64_t k = r.corrected ? 1 : 0;
  const std::int64_t a2 = 2 * t.a + k, b2 = 2 * t.b + k, c2 = 2 * t.c + k, d2 = 2 * t.d + k;
  r.ratio = Fraction::of(b2 * (c2 + d2), c2 * (a2 + b2));
  r.value = r.ratio.value();

  const double a = a2 / 2.0, b = b2 / 2.0, c = c2 / 2.0, d = d2 / 2.0;
  const double se = std::sqrt(1.0 / b - 1.0 / (a + b) + 1.0 / c - 1.0 / (c + d));
  const boost::math::normal standard;
  const double z = boost::math::quantile(standard, 0.5 + confidence / 2.0);
  const double log_value = std::log(r.value);
  r.ci_low = std::exp(log_value - z * se);
  r.ci_high = std::exp(log_value + z * se);
  return r;
}

Significance binomial_significance(std::int64_t successes, std::int64_t n, double p0) {
  if (n < 0 || successes < 0 || successes > n) {
    throw InputError("binomial test: need 0 <= successes <= n");
  }
  if (!(p0 >= 0.0 && p0 <= 1.0)) throw InputError("binomial test: p0 must lie in [0, 1]");
  Significance s;
  if (successes == 0) {
    s.p_value = 1.0;
  } else {
    // P(X >= k) = I_p(k, n - k + 1).
    s.p_value = boost::math::ibeta(static_cast<double>(successes),
                                   static_cast<double>(n - successes + 1), p0);
  }
  if (s.p_value < 0.05) {
    s.stars = "**";
  } else if (s.p_value < 0.10) {
    s.stars = "*";
  }
  return s;
}

SelectiveRisk selective_risk(const ContingencyTable& t) {
  if (t.total() == 0) throw InputError("selective risk: empty table");
  SelectiveRisk r;
  r.risk = Fraction::of(t.b, t.total());
  if (t.a + t.b > 0) r.conditional = Fraction::of(t.b, t.a + t.b);
  return r;
}

std::vector<CurvePoint> risk_coverage_curve(std::span<const Decision> decisions) {
  if (decisions.empty()) throw InputError("risk-coverage: no decisions");
  std::vector<const Decision*> order;
  order.reserve(decisions.size());
  for (const auto& d : decisions) {
    if (!d.answered_correctly) {
      throw InputError("risk-coverage: decision for '" + d.instance_id +
                       "' has no correctness (ambiguous instance?)");
    }
    order.push_back(&d);
  }
  std::sort(order.begin(), order.end(), [](const Decision* x, const Decision* y) {
    if (x->dr_confidence != y->dr_confidence) return x->dr_confidence > y->dr_confidence;
    return x->instance_id < y->instance_id;
  });
  std::vector<CurvePoint> curve;
  curve.reserve(order.size());
  const double n = static_cast<double>(order.size());
  std::size_t errors = 0;
  for (std::size_t m = 1; m <= order.size(); ++m) {
    if (!*order[m - 1]->answered_correctly) ++errors;
    curve.push_back({static_cast<double>(m) / n,
                     static_cast<double>(errors) / static_cast<double>(m)});
  }
  return curve;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

json to_json(const EvalReport& r) {
  json j;
  j["mode"] = r.mode;
  j["rule"] = r.rule;
  j["train_rif"] = r.train_rif ? json(*r.train_rif) : json(nullptr);
  j["train_benchmark"] = r.train_benchmark ? json(*r.train_benchmark) : json(nullptr);
  j["eval_benchmark"] = r.eval_benchmark;
  j["domain"] = r.domain;
  j["seed"] = r.seed;
  if (r.decision) {
    j["decision_risk_accuracy"] = {{"value", r.decision->accuracy.value()},
                                   {"hits", r.decision->hits},
                                   {"n", r.decision->n}};
  }
  if (r.significance) {
    j["significance"] = {{"p_value", r.significance->p_value}, {"stars", r.significance->stars}};
  }
  if (r.table) {
    j["table"] = {{"a", r.table->a}, {"b", r.table->b}, {"c", r.table->c}, {"d", r.table->d}};
    j["composite_risk_count"] = r.table->composite_risk();
    j["sensitivity"] = fraction_json(r.sensitivity);
    j["specificity"] = fraction_json(r.specificity);
    if (r.rrr) {
      j["rrr"] = {{"value", r.rrr->value},
                  {"ci_low", r.rrr->ci_low},
                  {"ci_high", r.rrr->ci_high},
                  {"corrected", r.rrr->corrected},
                  {"significantly_below_one", r.rrr->significantly_below_one()}};
    } else {
      j["rrr"] = nullptr;
    }
    if (r.selective) {
      j["selective_risk"] = fraction_json(r.selective->risk);
      j["conditional_risk"] = fraction_json(r.selective->conditional);
    }
    j["coverage"] = fraction_json(r.coverage);
  }
  return j;
}

std::string to_tsv(const EvalReport& report) {
  std::string out = "key\tvalue\n";
  auto emit = [&](const std::string& key, const json& v) {
    out += key + "\t" + (v.is_string() ? v.get<std::string>() : v.dump()) + "\n";
  };
  // Flatten one level of nesting: "rrr.ci_low" etc.
  const json j = to_json(report);
  for (const auto& [key, value] : j.items()) {
    if (value.is_object()) {
      for (const auto& [sub, v] : value.items()) emit(key + "." + sub, v);
    } else {
      emit(key, value);
    }
  }
  return out;
}

}  // namespace riskgate
