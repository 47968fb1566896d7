#pragma once

// Shared fixtures, random generators and test-only oracles.

#include <algorithm>
#include <deque>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "akd/case_model.hpp"
#include "akd/transactions.hpp"

namespace akd::testing {

inline PropertySet props(std::initializer_list<const char*> names) {
  PropertySet out;
  for (const auto* n : names) out.insert(PropertyId(n));
  return out;
}

inline Item item(const char* text) { return Item::parse(text); }

inline ItemSet items(std::initializer_list<const char*> texts) {
  ItemSet out;
  for (const auto* t : texts) out.insert(Item::parse(t));
  return out;
}

inline Ontology flat_ontology(std::initializer_list<const char*> names) {
  std::vector<PropertyId> p;
  for (const auto* n : names) p.emplace_back(n);
  return Ontology(std::move(p), {});
}

// Six cases: three of shape ({a,c,..},{A,B}) and three of shape ({c,d,..},{B,C}).
// The nine X->Y pairs share exactly {a-, c=, d+, A-, B=, C+}; (x1, y1) is the
// pair of the two-case worked example.
inline CaseBase iex_case_base() {
  auto onto = flat_ontology({"a", "b", "c", "d", "e", "f", "A", "B", "C"});
  std::vector<Case> cases{
      {"x1", props({"a", "b", "c"}), props({"A", "B"})},
      {"x2", props({"a", "c"}), props({"A", "B"})},
      {"x3", props({"a", "c", "e"}), props({"A", "B"})},
      {"y1", props({"b", "c", "d"}), props({"B", "C"})},
      {"y2", props({"c", "d", "e"}), props({"B", "C"})},
      {"y3", props({"c", "d", "f"}), props({"B", "C"})},
  };
  return CaseBase(std::move(onto), std::move(cases));
}

inline const char* kIexItems[] = {"pb:-:a", "pb:=:c", "pb:+:d", "sol:-:A", "sol:=:B", "sol:+:C"};

inline std::string prop_name(std::size_t k) { return "p" + std::to_string(k); }

// Random DAG: edges only go from lower to higher position of a random permutation.
inline Ontology random_ontology(std::mt19937& rng, std::size_t nodes, double edge_prob) {
  std::vector<std::size_t> perm(nodes);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::bernoulli_distribution edge(edge_prob);
  std::vector<PropertyId> p;
  for (std::size_t k = 0; k < nodes; ++k) p.emplace_back(prop_name(k));
  std::vector<Entailment> e;
  for (std::size_t i = 0; i < nodes; ++i)
    for (std::size_t j = i + 1; j < nodes; ++j)
      if (edge(rng)) e.push_back({PropertyId(prop_name(perm[i])), PropertyId(prop_name(perm[j]))});
  return Ontology(std::move(p), std::move(e));
}

inline PropertySet random_subset(std::mt19937& rng, const Ontology& onto, double prob) {
  std::bernoulli_distribution pick(prob);
  PropertySet out;
  for (const auto& p : onto.properties())
    if (pick(rng)) out.insert(p);
  return out;
}

// Independent reachability oracle: breadth-first search over the edge list.
inline PropertySet bfs_closure(const PropertySet& seeds, const Ontology& onto) {
  std::multimap<std::string, std::string> adj;
  for (const auto& e : onto.entails()) adj.emplace(e.premise.str(), e.conclusion.str());
  std::set<std::string> seen;
  std::deque<std::string> queue;
  for (const auto& s : seeds) {
    seen.insert(s.str());
    queue.push_back(s.str());
  }
  while (!queue.empty()) {
    auto v = queue.front();
    queue.pop_front();
    auto [lo, hi] = adj.equal_range(v);
    for (auto it = lo; it != hi; ++it)
      if (seen.insert(it->second).second) queue.push_back(it->second);
  }
  PropertySet out;
  for (const auto& s : seen) out.insert(PropertyId(s));
  return out;
}

inline CaseBase random_case_base(std::mt19937& rng, std::size_t n, std::size_t nodes, double edge_prob,
                                 double density) {
  auto onto = random_ontology(rng, nodes, edge_prob);
  std::vector<Case> cases;
  for (std::size_t k = 0; k < n; ++k)
    cases.push_back({"c" + std::to_string(k), random_subset(rng, onto, density), random_subset(rng, onto, density)});
  return CaseBase(std::move(onto), std::move(cases));
}

// Random transaction database over abstract items pb:=:i0..i{items-1}.
inline TransactionDb random_db(std::mt19937& rng, std::size_t max_items, std::size_t max_rows) {
  std::uniform_int_distribution<std::size_t> n_items(1, max_items), n_rows(1, max_rows);
  const auto m = n_items(rng), rows = n_rows(rng);
  std::uniform_real_distribution<double> dens(0.2, 0.8);
  std::bernoulli_distribution pick(dens(rng));
  std::vector<std::vector<Item>> data;
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<Item> row;
    for (std::size_t i = 0; i < m; ++i)
      if (pick(rng)) row.emplace_back(PropertyId("i" + std::to_string(i)), Polarity::Equal, Facet::Pb);
    data.push_back(std::move(row));
  }
  return TransactionDb::from_items(data);
}

}  // namespace akd::testing
