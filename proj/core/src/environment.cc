#include "kgpath/environment.h"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

namespace kgpath {

std::string_view to_string(StepKind kind) {
  switch (kind) {
    case StepKind::kMoved:
      return "moved";
    case StepKind::kFailed:
      return "failed";
    case StepKind::kReachedTarget:
      return "reached";
  }
  return "unknown";
}

EnvState reset(const KnowledgeGraph& kg, EntityPair pair) {
  if (!kg.valid_entity(pair.source) || !kg.valid_entity(pair.target)) {
    throw std::out_of_range("episode endpoint is not an entity of the graph");
  }
  EnvState s;
  s.source = pair.source;
  s.target = pair.target;
  s.current = pair.source;
  s.trace.push_back(pair.source);
  return s;
}

StepKind advance(const KnowledgeGraph& kg, EnvState& state, RelationId action, Rng& rng) {
  if (!kg.valid_relation(action)) throw std::out_of_range("action is not a relation id");
  ++state.steps_taken;
  const auto next = kg.neighbors(state.current, action);
  if (next.empty()) return StepKind::kFailed;
  std::size_t pick = 0;
  if (next.size() > 1) {
    std::uniform_int_distribution<std::size_t> uniform(0, next.size() - 1);
    pick = uniform(rng);
  }
  state.current = next[pick];
  state.path.push_back(action);
  state.trace.push_back(state.current);
  return state.at_target() ? StepKind::kReachedTarget : StepKind::kMoved;
}

StepOutcome step(const KnowledgeGraph& kg, const EnvState& state, RelationId action,
                 Rng& rng) {
  StepOutcome out;
  out.next = state;
  out.kind = advance(kg, out.next, action, rng);
  out.reward = out.kind == StepKind::kFailed ? -1.0 : 0.0;
  return out;
}

Walk remove_cycles(const Walk& walk) {
  Walk out;
  // Position of each entity in out.entities.
  std::unordered_map<EntityId, std::size_t> seen;
  out.entities.push_back(walk.entities.front());
  seen[walk.entities.front()] = 0;
  for (std::size_t i = 0; i < walk.relations.size(); ++i) {
    const EntityId next = walk.entities[i + 1];
    if (auto it = seen.find(next); it != seen.end()) {
      const std::size_t keep = it->second;
      for (std::size_t j = keep + 1; j < out.entities.size(); ++j) seen.erase(out.entities[j]);
      out.entities.resize(keep + 1);
      out.relations.resize(keep);
      continue;
    }
    out.relations.push_back(walk.relations[i]);
    out.entities.push_back(next);
    seen[next] = out.entities.size() - 1;
  }
  return out;
}

double reward_global(bool reached) { return reached ? 1.0 : -1.0; }

double reward_efficiency(const PathFormula& path) {
  if (path.empty()) throw std::invalid_argument("efficiency reward of an empty path");
  return 1.0 / static_cast<double>(path.size());
}

double reward_diversity(const EmbeddingTable& table, const PathFormula& path,
                        std::span<const PathFormula> existing) {
  if (existing.empty()) return 0.0;
  const Vector p = path_embedding(table, path);
  const double pp = p.dot(p);
  double total = 0.0;
  for (const PathFormula& other : existing) {
    const Vector q = path_embedding(table, other);
    const double qq = q.dot(q);
    if (pp > 0.0 && qq > 0.0) {
      // sqrt(pp * pp) == pp exactly, so identical paths score exactly 1.
      total += std::clamp(p.dot(q) / std::sqrt(pp * qq), -1.0, 1.0);
    }
  }
  return -total / static_cast<double>(existing.size());
}

double combine_rewards(const RewardWeights& weights, double global, double efficiency,
                       double diversity) {
  return weights.global * global + weights.efficiency * efficiency +
         weights.diversity * diversity;
}

void write_episode_log(std::ostream& out, const KnowledgeGraph& kg,
                       std::span<const EpisodeRecord> records) {
  for (const auto& r : records) {
    out << r.step << '\t' << kg.entity_name(r.entity) << '\t' << kg.relation_name(r.action)
        << '\t' << to_string(r.kind) << '\t' << r.reward << '\n';
  }
}

}  // namespace kgpath
