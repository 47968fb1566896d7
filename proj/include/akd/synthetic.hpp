#pragma once

// Deterministic synthetic case bases for scale tests and benchmarks.
//
// Problem leaves p<k> entail a category pc<k % categories>; solution leaves
// s<k> entail sc<k % categories>. Each case draws a few problem leaves, and
// each drawn leaf plants its associated solution leaf with fixed probability,
// so the pairwise transactions carry real problem->solution regularities.

#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "akd/case_model.hpp"

namespace akd {

struct SyntheticSpec {
  std::size_t cases = 750;
  std::size_t problem_leaves = 24;
  std::size_t solution_leaves = 12;
  std::size_t categories = 4;
  std::size_t min_leaves_per_case = 1;
  std::size_t max_leaves_per_case = 3;
  double planted = 0.8;  // probability a drawn problem leaf brings its solution leaf
  double noise = 0.2;    // probability of one extra random solution leaf
  std::uint64_t seed = 42;
};

inline CaseBase synthetic_case_base(const SyntheticSpec& spec = {}) {
  auto name = [](const char* prefix, std::size_t k) {
    std::string digits = std::to_string(k);
    if (digits.size() < 2) digits.insert(0, 2 - digits.size(), '0');
    return PropertyId(prefix + digits);
  };

  std::vector<PropertyId> props;
  std::vector<Entailment> edges;
  for (std::size_t c = 0; c < spec.categories; ++c) {
    props.push_back(name("pc", c));
    props.push_back(name("sc", c));
  }
  for (std::size_t k = 0; k < spec.problem_leaves; ++k) {
    props.push_back(name("p", k));
    edges.push_back({name("p", k), name("pc", k % spec.categories)});
  }
  for (std::size_t k = 0; k < spec.solution_leaves; ++k) {
    props.push_back(name("s", k));
    edges.push_back({name("s", k), name("sc", k % spec.categories)});
  }
  Ontology onto(std::move(props), std::move(edges));

  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::size_t> n_leaves(spec.min_leaves_per_case, spec.max_leaves_per_case);
  std::uniform_int_distribution<std::size_t> pick_problem(0, spec.problem_leaves - 1);
  std::uniform_int_distribution<std::size_t> pick_solution(0, spec.solution_leaves - 1);
  std::bernoulli_distribution planted(spec.planted), noise(spec.noise);

  std::vector<Case> cases;
  cases.reserve(spec.cases);
  for (std::size_t i = 0; i < spec.cases; ++i) {
    Case c{"case" + std::to_string(i), {}, {}};
    const auto k = n_leaves(rng);
    while (c.problem.size() < k) c.problem.insert(name("p", pick_problem(rng)));
    for (const auto& p : c.problem) {
      const auto leaf = std::stoul(p.str().substr(1));
      if (planted(rng)) c.solution.insert(name("s", leaf % spec.solution_leaves));
    }
    if (noise(rng)) c.solution.insert(name("s", pick_solution(rng)));
    cases.push_back(std::move(c));
  }
  return CaseBase(std::move(onto), std::move(cases));
}

}  // namespace akd
