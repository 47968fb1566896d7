#pragma once

// End-to-end operations shared by the command line and the review service.

#include <optional>
#include <string>
#include <vector>

#include "akd/knowledge_store.hpp"

namespace akd {

struct MineConfig {
  SupportThreshold sigma{Rational{0, 1}};
  unsigned workers = 1;
  std::optional<Rational> pair_filter;
  std::size_t max_items = 10'000'000;
  std::size_t max_fcis = 5'000'000;
};

inline Workspace mine_workspace(CaseBase cb, const MineConfig& cfg) {
  const auto db = build_transaction_db(cb, {cfg.workers, cfg.max_items, cfg.pair_filter});
  if (db.empty()) throw ValidationError("case base yields no transactions; at least two cases are needed");
  auto fcis = mine_closed_frequent(db, cfg.sigma, {cfg.workers, cfg.max_fcis});
  return make_workspace(std::move(cb), cfg.sigma, cfg.pair_filter, db.size(), std::move(fcis), db.dictionary());
}

inline TransactionDb rebuild_transactions(const Workspace& w, unsigned workers = 1) {
  BuildOptions opts;
  opts.workers = workers;
  opts.pair_filter = w.pair_filter;
  return build_transaction_db(w.case_base, opts);
}

inline std::vector<AdaptationRule> accepted_rules(const Workspace& w) {
  std::vector<AdaptationRule> out;
  for (const auto& r : w.rules)
    if (r.status == RuleStatus::Accepted) out.push_back(r);
  return out;
}

inline SolveOutcome solve_in_workspace(const Workspace& w, const TargetProblem& tgt, std::size_t k) {
  check_known(tgt, w.case_base.ontology());
  return solve_target(w.case_base, accepted_rules(w), tgt, k);
}

// Canonical text of a solve result; the CLI prints it and the service returns
// it as the response body.
inline std::string solve_payload(const SolveOutcome& outcome) { return to_json(outcome).dump() + "\n"; }

inline bool shown(const Fci& f, bool hide_empty) { return !(hide_empty && f.items.empty()); }

// Lowest-id rule derived from each FCI, if any.
inline std::vector<std::optional<RuleId>> rule_of_fci(const Workspace& w) {
  std::vector<std::optional<RuleId>> out(w.fcis.size());
  for (const auto& r : w.rules)
    if (r.source_fci < out.size() && !out[r.source_fci]) out[r.source_fci] = r.id;
  return out;
}

}  // namespace akd
