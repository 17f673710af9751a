#pragma once

// Small graphs with a planted composition rule.
//
// Every positive pair (a, c) is realized by a private chain
// a -body0-> b1 -body1-> ... -> c through fresh entities, and (a, target, c)
// is the fact to be inferred. Decoy relations carry uniform noise edges.
// Optional alternative chains reuse the same intermediates with their own
// relations, so several formulas explain the same positives.

#include <cstdint>
#include <string>
#include <vector>

#include "kgpath/kg_store.h"
#include "kgpath/types.h"

namespace kgpath {

struct PlantedRuleSpec {
  std::string target_relation = "concludes";
  std::size_t body_length = 2;  // 1 to 3
  std::size_t entity_count = 200;
  std::size_t noise_edges = 500;
  std::size_t positive_pairs = 50;
  std::size_t decoy_relations = 8;
  std::size_t alternative_chains = 0;
  double train_fraction = 0.5;
  std::size_t negatives_per_positive = 10;
  std::uint64_t seed = 0;
};

struct SyntheticTask {
  KnowledgeGraph graph;  // inverse-closed, target facts removed
  TaskSplit split;
  PathFormula rule;  // body0 -> body1 -> ...
  std::vector<PathFormula> alternative_rules;
  // Every generated fact including the target ones, in emission order.
  std::vector<NamedTriple> triples;
};

// Throws std::invalid_argument when the settings cannot be realized: body length
// outside 1..3, fewer than 2 positives, entity_count below
// (body_length + 1) * positive_pairs, noise without decoys, or more noise
// edges than distinct (u, decoy, v) slots.
SyntheticTask generate(const PlantedRuleSpec& spec);

}  // namespace kgpath
