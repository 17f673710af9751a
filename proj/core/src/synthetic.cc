#include "kgpath/synthetic.h"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>
#include <tuple>

#include "kgpath/rng.h"

namespace kgpath {
namespace {

std::string entity(std::size_t i) { return "e" + std::to_string(i); }

void validate(const PlantedRuleSpec& s) {
  if (s.body_length < 1 || s.body_length > 3) {
    throw std::invalid_argument("rule body length must be 1, 2 or 3");
  }
  if (s.positive_pairs < 2) throw std::invalid_argument("need at least two positive pairs");
  if (s.entity_count < (s.body_length + 1) * s.positive_pairs) {
    throw std::invalid_argument("entity_count too small for disjoint rule chains");
  }
  if (s.noise_edges > 0 && s.decoy_relations == 0) {
    throw std::invalid_argument("noise edges need at least one decoy relation");
  }
  const double slots = static_cast<double>(s.entity_count) *
                       static_cast<double>(s.entity_count - 1) *
                       static_cast<double>(s.decoy_relations);
  if (static_cast<double>(s.noise_edges) > slots / 2) {
    throw std::invalid_argument("too many noise edges for the entity and decoy counts");
  }
  if (s.target_relation.empty()) throw std::invalid_argument("empty target relation name");
}

}  // namespace

SyntheticTask generate(const PlantedRuleSpec& spec) {
  validate(spec);
  Rng rng(derive_seed(spec.seed, 4));

  std::vector<std::size_t> perm(spec.entity_count);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);

  const std::size_t L = spec.body_length;
  std::vector<std::string> body;
  for (std::size_t j = 0; j < L; ++j) body.push_back("body" + std::to_string(j));
  std::vector<std::vector<std::string>> alts(spec.alternative_chains);
  for (std::size_t k = 0; k < spec.alternative_chains; ++k) {
    for (std::size_t j = 0; j < L; ++j) {
      alts[k].push_back("alt" + std::to_string(k) + "_" + std::to_string(j));
    }
  }

  SyntheticTask task;
  auto& out = task.triples;
  std::vector<std::pair<std::string, std::string>> positives;
  for (std::size_t i = 0; i < spec.positive_pairs; ++i) {
    const std::size_t* chain = &perm[i * (L + 1)];
    for (std::size_t j = 0; j < L; ++j) {
      out.push_back({entity(chain[j]), body[j], entity(chain[j + 1])});
    }
    for (const auto& alt : alts) {
      for (std::size_t j = 0; j < L; ++j) {
        out.push_back({entity(chain[j]), alt[j], entity(chain[j + 1])});
      }
    }
    positives.emplace_back(entity(chain[0]), entity(chain[L]));
  }

  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> noise;
  std::uniform_int_distribution<std::size_t> pick_entity(0, spec.entity_count - 1);
  std::uniform_int_distribution<std::size_t> pick_decoy(
      0, spec.decoy_relations == 0 ? 0 : spec.decoy_relations - 1);
  while (noise.size() < spec.noise_edges) {
    const std::size_t u = pick_entity(rng);
    const std::size_t d = pick_decoy(rng);
    const std::size_t v = pick_entity(rng);
    if (u == v || !noise.emplace(u, d, v).second) continue;
    out.push_back({entity(u), "decoy" + std::to_string(d), entity(v)});
  }

  for (const auto& [a, c] : positives) out.push_back({a, spec.target_relation, c});

  const KnowledgeGraph closed = augment_inverses(graph_from_named(out));
  const RelationId target = *closed.find_relation(spec.target_relation);
  TaskSplitResult split = make_task_split(closed, target, spec.train_fraction,
                                          spec.negatives_per_positive,
                                          derive_seed(spec.seed, 5));
  task.graph = std::move(split.graph);
  task.split = std::move(split.split);
  for (const auto& name : body) task.rule.push_back(*task.graph.find_relation(name));
  for (const auto& alt : alts) {
    PathFormula f;
    for (const auto& name : alt) f.push_back(*task.graph.find_relation(name));
    task.alternative_rules.push_back(std::move(f));
  }
  return task;
}

}  // namespace kgpath
