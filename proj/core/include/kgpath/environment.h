#pragma once

// The path-finding MDP: the agent sits on an entity, picks a relation, and
// moves to one of that relation's neighbors (or fails and stays put).

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "kgpath/embedding.h"
#include "kgpath/kg_store.h"
#include "kgpath/rng.h"
#include "kgpath/types.h"

namespace kgpath {

struct EnvState {
  EntityId source = 0;
  EntityId target = 0;
  EntityId current = 0;
  // Attempted actions, failed ones included.
  std::size_t steps_taken = 0;
  PathFormula path;
  // trace.size() == path.size() + 1, trace.front() == source.
  std::vector<EntityId> trace;

  bool at_target() const { return current == target; }

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

enum class StepKind { kMoved, kFailed, kReachedTarget };

std::string_view to_string(StepKind kind);

struct StepOutcome {
  StepKind kind = StepKind::kMoved;
  double reward = 0.0;  // -1 for a failed step, 0 otherwise
  EnvState next;
};

// Throws std::out_of_range for unknown entities.
EnvState reset(const KnowledgeGraph& kg, EntityPair pair);

// Takes `action` from state.current. With no outgoing `action` edge the step
// fails: reward -1 and only steps_taken changes. Otherwise the next entity is
// drawn uniformly among the neighbors. Throws std::out_of_range for an
// invalid relation id.
StepOutcome step(const KnowledgeGraph& kg, const EnvState& state, RelationId action,
                 Rng& rng);

// In-place variant of step for rollout loops; returns the outcome kind.
StepKind advance(const KnowledgeGraph& kg, EnvState& state, RelationId action, Rng& rng);

// A relation path together with the entities it visits.
struct Walk {
  PathFormula relations;
  std::vector<EntityId> entities;  // relations.size() + 1 entries

  friend bool operator==(const Walk&, const Walk&) = default;
};

// Splices out every loop so no entity is visited twice. The result is
// still a valid edge sequence from the same start to the same end.
Walk remove_cycles(const Walk& walk);

struct RewardWeights {
  double global = 0.1;
  double efficiency = 0.8;
  double diversity = 0.1;
};

// +1 when the target was reached, -1 otherwise.
double reward_global(bool reached);

// 1 / length. Throws std::invalid_argument on an empty path.
double reward_efficiency(const PathFormula& path);

// Negative mean cosine similarity between the path embedding and the
// embeddings of `existing`. Zero for an empty set; a zero-norm embedding
// has cosine 0 with anything.
double reward_diversity(const EmbeddingTable& table, const PathFormula& path,
                        std::span<const PathFormula> existing);

double combine_rewards(const RewardWeights& weights, double global, double efficiency,
                       double diversity);

// One line per attempted action, for replay and debugging.
struct EpisodeRecord {
  std::size_t step = 0;
  EntityId entity = 0;  // entity the action was taken from
  RelationId action = 0;
  StepKind kind = StepKind::kMoved;
  double reward = 0.0;
};

// "step<TAB>entity<TAB>action<TAB>outcome<TAB>reward" with names resolved.
void write_episode_log(std::ostream& out, const KnowledgeGraph& kg,
                       std::span<const EpisodeRecord> records);

}  // namespace kgpath
