#pragma once

// Adaptation rules read off FCIs, and the small CBR loop that uses them:
// retrieve similar cases, match rules against delta(srce, tgt), edit the
// retrieved solution.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "akd/case_model.hpp"
#include "akd/errors.hpp"
#include "akd/miner.hpp"
#include "akd/rational.hpp"
#include "akd/transactions.hpp"

namespace akd {

enum class RuleStatus { Candidate, Accepted, Rejected };

inline std::string_view to_string(RuleStatus s) {
  switch (s) {
    case RuleStatus::Candidate: return "candidate";
    case RuleStatus::Accepted: return "accepted";
    case RuleStatus::Rejected: return "rejected";
  }
  return "?";
}

inline RuleStatus parse_rule_status(std::string_view s) {
  if (s == "candidate") return RuleStatus::Candidate;
  if (s == "accepted") return RuleStatus::Accepted;
  if (s == "rejected") return RuleStatus::Rejected;
  throw ParseError("unknown rule status '" + std::string(s) + "'");
}

using RuleId = std::int64_t;

struct AdaptationRule {
  RuleId id = 0;
  std::size_t source_fci = 0;
  ItemSet pb_conditions;
  PropertySet sol_keep;
  PropertySet sol_remove;
  PropertySet sol_add;
  RuleStatus status = RuleStatus::Candidate;
  std::string explanation;

  friend bool operator==(const AdaptationRule&, const AdaptationRule&) = default;
};

inline void validate(const AdaptationRule& r) {
  const auto where = "rule " + std::to_string(r.id);
  for (const auto& i : r.pb_conditions)
    if (i.facet != Facet::Pb) throw ValidationError(where + ": condition " + i.str() + " is not a problem item");
  auto overlap = [&](const PropertySet& a, const PropertySet& b, const char* what) {
    for (const auto& p : a)
      if (b.contains(p)) throw ValidationError(where + ": '" + p.str() + "' is in both " + what);
  };
  overlap(r.sol_keep, r.sol_remove, "keep and remove");
  overlap(r.sol_keep, r.sol_add, "keep and add");
  overlap(r.sol_remove, r.sol_add, "remove and add");
  if (r.status == RuleStatus::Accepted) {
    if (r.explanation.empty()) throw ValidationError(where + ": accepted rule needs an explanation");
    if (r.pb_conditions.empty()) throw ValidationError(where + ": accepted rule needs problem conditions");
  }
}

// Problem items become conditions; solution items become keep/remove/add by
// polarity.
inline AdaptationRule fci_to_rule_candidate(const Fci& f, const ItemDictionary& dict, RuleId rule_id) {
  AdaptationRule r;
  r.id = rule_id;
  r.source_fci = f.id;
  bool has_sol = false;
  for (auto code : f.items) {
    const auto& i = dict.item(code);
    if (i.facet == Facet::Pb) {
      r.pb_conditions.insert(i);
      continue;
    }
    has_sol = true;
    switch (i.polarity) {
      case Polarity::Equal: r.sol_keep.insert(i.property); break;
      case Polarity::Minus: r.sol_remove.insert(i.property); break;
      case Polarity::Plus: r.sol_add.insert(i.property); break;
    }
  }
  if (!has_sol) throw ValidationError("FCI " + std::to_string(f.id) + " has no solution item; not an adaptation");
  return r;
}

struct TargetProblem {
  PropertySet problem;
};

namespace detail {

// Conditions of `r` violated by a (closed srce problem, closed srce solution,
// closed target) triple. Solution-side conditions are reported as sol items:
// keep -> "sol:=:X", remove -> "sol:-:X" (X missing from Sol(srce)),
// add -> "sol:+:X" (X already in Sol(srce)).
inline std::vector<Item> unmet(const AdaptationRule& r, const PropertySet& srce_pb, const PropertySet& srce_sol,
                               const PropertySet& tgt_pb) {
  std::vector<Item> out;
  const auto d = delta(srce_pb, tgt_pb, Facet::Pb);
  for (const auto& c : r.pb_conditions)
    if (!d.contains(c)) out.push_back(c);
  for (const auto& p : r.sol_keep)
    if (!srce_sol.contains(p)) out.emplace_back(p, Polarity::Equal, Facet::Sol);
  for (const auto& p : r.sol_remove)
    if (!srce_sol.contains(p)) out.emplace_back(p, Polarity::Minus, Facet::Sol);
  for (const auto& p : r.sol_add)
    if (srce_sol.contains(p)) out.emplace_back(p, Polarity::Plus, Facet::Sol);
  std::sort(out.begin(), out.end());
  return out;
}

inline PropertySet edit(const PropertySet& sol, const AdaptationRule& r, const Ontology& onto) {
  PropertySet out;
  std::set_difference(sol.begin(), sol.end(), r.sol_remove.begin(), r.sol_remove.end(), std::inserter(out, out.end()));
  out.insert(r.sol_add.begin(), r.sol_add.end());
  return closure(out, onto);
}

}  // namespace detail

inline bool match_rule(const AdaptationRule& r, const Case& srce, const TargetProblem& tgt, const Ontology& onto) {
  const auto f = format_case(srce, onto);
  return detail::unmet(r, f.problem, f.solution, closure(tgt.problem, onto)).empty();
}

// closure((Sol(srce) \ remove) U add)
inline PropertySet apply_rule(const AdaptationRule& r, const Case& srce, const Ontology& onto) {
  return detail::edit(closure(srce.solution, onto), r, onto);
}

struct Retrieved {
  const Case* source;
  Rational score;
};

inline Rational jaccard(const PropertySet& a, const PropertySet& b) {
  std::size_t inter = 0;
  for (const auto& p : a) inter += b.contains(p) ? 1 : 0;
  const auto uni = a.size() + b.size() - inter;
  if (uni == 0) return {1, 1};
  return {inter, uni};
}

inline void check_known(const TargetProblem& tgt, const Ontology& onto) {
  for (const auto& p : tgt.problem)
    if (!onto.contains(p)) throw UnknownPropertyError(p.str());
}

// Top-k by Jaccard over closed problems; ties by ascending case id.
inline std::vector<Retrieved> retrieve(const CaseBase& cb, const TargetProblem& tgt, std::size_t k) {
  if (cb.size() == 0) throw ValidationError("retrieval from an empty case base");
  if (k == 0) throw ValidationError("retrieval depth must be positive");
  check_known(tgt, cb.ontology());
  const auto target = closure(tgt.problem, cb.ontology());
  std::vector<Retrieved> all;
  for (const auto& c : cb.cases()) all.push_back({&c, jaccard(closure(c.problem, cb.ontology()), target)});
  std::sort(all.begin(), all.end(), [](const Retrieved& a, const Retrieved& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.source->id < b.source->id;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

struct TraceStep {
  RuleId rule;
  PropertySet removed;
  PropertySet added;
  std::string explanation;
  friend bool operator==(const TraceStep&, const TraceStep&) = default;
};

struct AdaptationResult {
  PropertySet solution;
  std::string used_case;
  Rational score;
  std::vector<RuleId> used_rules;
  std::vector<TraceStep> trace;  // empty for identity adaptation
};

struct RuleMiss {
  RuleId rule;
  std::vector<Item> unmet;
};

struct NearMiss {
  std::string case_id;
  Rational score;
  std::vector<RuleMiss> rules;
};

struct NoSolutionReport {
  std::vector<NearMiss> candidates;
};

using SolveOutcome = std::variant<AdaptationResult, NoSolutionReport>;

inline PropertySet replay_trace(const PropertySet& start, const std::vector<TraceStep>& trace, const Ontology& onto) {
  PropertySet sol = start;
  for (const auto& step : trace) {
    AdaptationRule edit;
    edit.sol_remove = step.removed;
    edit.sol_add = step.added;
    sol = detail::edit(sol, edit, onto);
  }
  return sol;
}

// Walks retrieved cases in rank order and applies the most specific matching
// rule (largest condition set, then lowest id) of the first case that has one.
// A case with no matching rule is copied unchanged only when its score is 1.
inline SolveOutcome solve_target(const CaseBase& cb, const std::vector<AdaptationRule>& rules,
                                 const TargetProblem& tgt, std::size_t k) {
  for (const auto& r : rules)
    if (r.status != RuleStatus::Accepted)
      throw ValidationError("solve_target takes accepted rules only; rule " + std::to_string(r.id) + " is " +
                            std::string(to_string(r.status)));
  const auto& onto = cb.ontology();
  const auto ranked = retrieve(cb, tgt, k);
  const auto target = closure(tgt.problem, onto);

  NoSolutionReport report;
  for (const auto& hit : ranked) {
    const auto f = format_case(*hit.source, onto);
    const AdaptationRule* best = nullptr;
    NearMiss miss{hit.source->id, hit.score, {}};
    for (const auto& r : rules) {
      auto u = detail::unmet(r, f.problem, f.solution, target);
      if (!u.empty()) {
        miss.rules.push_back({r.id, std::move(u)});
        continue;
      }
      if (!best || r.pb_conditions.size() > best->pb_conditions.size() ||
          (r.pb_conditions.size() == best->pb_conditions.size() && r.id < best->id))
        best = &r;
    }
    if (best) {
      AdaptationResult res{detail::edit(f.solution, *best, onto), hit.source->id, hit.score, {best->id}, {}};
      res.trace.push_back({best->id, best->sol_remove, best->sol_add, best->explanation});
      return res;
    }
    if (hit.score == Rational{1, 1}) return AdaptationResult{f.solution, hit.source->id, hit.score, {}, {}};
    std::sort(miss.rules.begin(), miss.rules.end(), [](const RuleMiss& a, const RuleMiss& b) { return a.rule < b.rule; });
    report.candidates.push_back(std::move(miss));
  }
  return report;
}

// ---------------------------------------------------------------------------
// JSON

inline json to_json(const AdaptationRule& r) {
  json conds = json::array();
  for (const auto& i : r.pb_conditions) conds.push_back(i.str());
  return {{"id", r.id},
          {"source_fci", r.source_fci},
          {"pb_conditions", std::move(conds)},
          {"sol_keep", detail::to_json(r.sol_keep)},
          {"sol_remove", detail::to_json(r.sol_remove)},
          {"sol_add", detail::to_json(r.sol_add)},
          {"status", std::string(to_string(r.status))},
          {"explanation", r.explanation}};
}

namespace detail {

inline ItemSet item_set(const json& arr, const char* where) {
  if (!arr.is_array()) throw ParseError(std::string(where) + " must be an array");
  ItemSet out;
  for (const auto& s : arr) {
    auto i = Item::parse(as_string(s, where));
    if (!out.insert(i).second) throw ValidationError("duplicate item " + i.str() + " in " + where);
  }
  return out;
}

}  // namespace detail

inline AdaptationRule rule_from_json(const json& j) {
  AdaptationRule r;
  const auto& id = detail::member(j, "id", "rule");
  if (!id.is_number_integer()) throw ParseError("rule id must be an integer");
  r.id = id.get<RuleId>();
  const auto& src = detail::member(j, "source_fci", "rule");
  if (!src.is_number_unsigned()) throw ParseError("rule source_fci must be a non-negative integer");
  r.source_fci = src.get<std::size_t>();
  r.pb_conditions = detail::item_set(detail::member(j, "pb_conditions", "rule"), "pb_conditions");
  r.sol_keep = detail::property_set(detail::member(j, "sol_keep", "rule"), "sol_keep");
  r.sol_remove = detail::property_set(detail::member(j, "sol_remove", "rule"), "sol_remove");
  r.sol_add = detail::property_set(detail::member(j, "sol_add", "rule"), "sol_add");
  r.status = parse_rule_status(detail::as_string(detail::member(j, "status", "rule"), "rule status"));
  r.explanation = detail::as_string(detail::member(j, "explanation", "rule"), "rule explanation");
  validate(r);
  return r;
}

inline json to_json(const SolveOutcome& outcome) {
  if (const auto* res = std::get_if<AdaptationResult>(&outcome)) {
    json trace = json::array();
    for (const auto& s : res->trace)
      trace.push_back({{"rule", s.rule},
                       {"removed", detail::to_json(s.removed)},
                       {"added", detail::to_json(s.added)},
                       {"explanation", s.explanation}});
    return {{"status", "solved"},
            {"adaptation", res->trace.empty() ? "identity" : "rule"},
            {"solution", detail::to_json(res->solution)},
            {"used_case", res->used_case},
            {"score", res->score.to_double()},
            {"used_rules", res->used_rules},
            {"trace", std::move(trace)}};
  }
  const auto& report = std::get<NoSolutionReport>(outcome);
  json cands = json::array();
  for (const auto& m : report.candidates) {
    json rules = json::array();
    for (const auto& r : m.rules) {
      json items = json::array();
      for (const auto& i : r.unmet) items.push_back(i.str());
      rules.push_back({{"rule", r.rule}, {"unmet", std::move(items)}});
    }
    cands.push_back({{"case", m.case_id}, {"score", m.score.to_double()}, {"rules", std::move(rules)}});
  }
  return {{"status", "no-solution"}, {"candidates", std::move(cands)}};
}

inline TargetProblem target_from_json(const json& j) {
  return {detail::property_set(detail::member(j, "problem", "target"), "target problem")};
}

}  // namespace akd
