#pragma once

// Imitation bootstrapping: teacher paths from a randomized two-sided BFS,
// replayed as +1-reward REINFORCE updates.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "kgpath/embedding.h"
#include "kgpath/environment.h"
#include "kgpath/kg_store.h"
#include "kgpath/policy.h"
#include "kgpath/rng.h"

namespace kgpath {

using TeacherPath = Walk;

// Shortest walk from `from` to `to` with at most `depth_limit` edges,
// expanding edges in (relation, tail) order. A zero-length walk when
// from == to; nullopt when unreachable within the limit.
std::optional<Walk> bfs_path(const KnowledgeGraph& kg, EntityId from, EntityId to,
                             std::size_t depth_limit);

// Draws intermediates uniformly from all entities; for each, joins the
// shortest source->intermediate and intermediate->target legs. Draws whose
// legs fail are redrawn, up to 10 draws per requested intermediate. Loops
// are spliced out and results are deduplicated by relation sequence.
std::vector<TeacherPath> randomized_bfs_paths(const KnowledgeGraph& kg, EntityId source,
                                              EntityId target,
                                              std::size_t num_intermediates,
                                              std::size_t depth_limit, Rng& rng);

// (state, action) supervision for a teacher path, following the path's own
// entity trace. Reward is +1.
Trajectory teacher_trajectory(const EmbeddingTable& table, const TeacherPath& path,
                              EntityId target);

struct SupervisedConfig {
  std::size_t episodes = 500;
  std::size_t num_intermediates = 5;
  std::size_t depth_limit = 3;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
};

struct SupervisedResult {
  PolicyParams policy;
  AdamState optimizer;
  std::size_t episodes_run = 0;
  std::size_t pairs_without_paths = 0;
  std::size_t updates = 0;
  // Every teacher path used, in training order, one entry per update.
  std::vector<PathFormula> teacher_paths;
};

// Episode i trains on one positive pair (pairs are visited in a seeded
// order reshuffled every pass). Each teacher path found for the pair gets
// its own update. `on_episode` sees the 1-based episode index and the
// current policy.
SupervisedResult train_supervised(
    PolicyParams policy, const KnowledgeGraph& kg, const EmbeddingTable& table,
    std::span<const EntityPair> positives, const SupervisedConfig& config,
    const std::function<void(std::size_t, const PolicyParams&)>& on_episode = {});

// One path per line, relation names joined by " -> ".
void write_teacher_paths(std::ostream& out, const KnowledgeGraph& kg,
                         std::span<const PathFormula> paths);

}  // namespace kgpath
