#include "kgpath/supervised_trainer.h"

#include <algorithm>
#include <deque>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "kgpath/reasoner.h"

namespace kgpath {
namespace {

constexpr std::size_t kDrawsPerIntermediate = 10;

Walk concatenate(const Walk& first, const Walk& second) {
  Walk w = first;
  w.relations.insert(w.relations.end(), second.relations.begin(), second.relations.end());
  w.entities.insert(w.entities.end(), second.entities.begin() + 1, second.entities.end());
  return w;
}

bool follows_edges(const KnowledgeGraph& kg, const Walk& w) {
  if (w.entities.size() != w.relations.size() + 1) return false;
  for (std::size_t i = 0; i < w.relations.size(); ++i) {
    if (!kg.has_edge(w.entities[i], w.relations[i], w.entities[i + 1])) return false;
  }
  return true;
}

}  // namespace

std::optional<Walk> bfs_path(const KnowledgeGraph& kg, EntityId from, EntityId to,
                             std::size_t depth_limit) {
  if (!kg.valid_entity(from) || !kg.valid_entity(to)) {
    throw std::out_of_range("entity id out of range");
  }
  if (from == to) return Walk{{}, {from}};

  struct Parent {
    EntityId entity;
    RelationId relation;
    std::size_t depth;
  };
  std::unordered_map<EntityId, Parent> parent;
  parent.emplace(from, Parent{from, 0, 0});
  std::deque<EntityId> queue{from};

  while (!queue.empty()) {
    const EntityId u = queue.front();
    queue.pop_front();
    const std::size_t depth = parent.at(u).depth;
    if (depth >= depth_limit) continue;
    const auto edges = kg.out_edges(u);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const EntityId v = edges.tails[i];
      if (!parent.emplace(v, Parent{u, edges.relations[i], depth + 1}).second) continue;
      if (v == to) {
        Walk w;
        for (EntityId x = to; x != from; x = parent.at(x).entity) {
          w.entities.push_back(x);
          w.relations.push_back(parent.at(x).relation);
        }
        w.entities.push_back(from);
        std::reverse(w.entities.begin(), w.entities.end());
        std::reverse(w.relations.begin(), w.relations.end());
        return w;
      }
      queue.push_back(v);
    }
  }
  return std::nullopt;
}

std::vector<TeacherPath> randomized_bfs_paths(const KnowledgeGraph& kg, EntityId source,
                                              EntityId target,
                                              std::size_t num_intermediates,
                                              std::size_t depth_limit, Rng& rng) {
  if (source == target) throw std::invalid_argument("teacher search needs source != target");
  if (num_intermediates == 0 || depth_limit == 0) {
    throw std::invalid_argument("teacher search limits must be >= 1");
  }
  if (!kg.valid_entity(source) || !kg.valid_entity(target)) {
    throw std::out_of_range("entity id out of range");
  }
  std::uniform_int_distribution<EntityId> any_entity(
      0, static_cast<EntityId>(kg.entity_count() - 1));

  std::vector<TeacherPath> paths;
  std::set<PathFormula> seen;
  std::size_t found = 0;
  const std::size_t max_draws = num_intermediates * kDrawsPerIntermediate;
  for (std::size_t draw = 0; draw < max_draws && found < num_intermediates; ++draw) {
    const EntityId inter = any_entity(rng);
    const auto left = bfs_path(kg, source, inter, depth_limit);
    if (!left) continue;
    const auto right = bfs_path(kg, inter, target, depth_limit);
    if (!right) continue;
    ++found;
    Walk path = remove_cycles(concatenate(*left, *right));
    if (path.relations.empty() || !follows_edges(kg, path)) continue;
    if (seen.insert(path.relations).second) paths.push_back(std::move(path));
  }
  return paths;
}

Trajectory teacher_trajectory(const EmbeddingTable& table, const TeacherPath& path,
                              EntityId target) {
  Trajectory t;
  t.reward = 1.0;
  t.steps.reserve(path.relations.size());
  for (std::size_t i = 0; i < path.relations.size(); ++i) {
    t.steps.push_back({embed_state(table, path.entities[i], target), path.relations[i]});
  }
  return t;
}

SupervisedResult train_supervised(
    PolicyParams policy, const KnowledgeGraph& kg, const EmbeddingTable& table,
    std::span<const EntityPair> positives, const SupervisedConfig& config,
    const std::function<void(std::size_t, const PolicyParams&)>& on_episode) {
  SupervisedResult result;
  result.optimizer = AdamState::for_params(policy);
  if (config.episodes > 0 && positives.empty()) {
    throw std::invalid_argument("supervised training needs positive pairs");
  }

  Rng rng(derive_seed(config.seed, 2));
  std::vector<std::size_t> order(positives.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  for (std::size_t episode = 1; episode <= config.episodes; ++episode) {
    if (cursor == order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const EntityPair pair = positives[order[cursor++]];
    ++result.episodes_run;
    if (pair.source == pair.target) {
      ++result.pairs_without_paths;
      continue;
    }
    const auto paths = randomized_bfs_paths(kg, pair.source, pair.target,
                                            config.num_intermediates, config.depth_limit, rng);
    if (paths.empty()) ++result.pairs_without_paths;
    for (const TeacherPath& path : paths) {
      const Trajectory t = teacher_trajectory(table, path, pair.target);
      apply_update(policy, reinforce_gradient(policy, t), result.optimizer, config.optimizer);
      ++result.updates;
      result.teacher_paths.push_back(path.relations);
    }
    if (on_episode) on_episode(episode, policy);
  }
  result.policy = std::move(policy);
  return result;
}

void write_teacher_paths(std::ostream& out, const KnowledgeGraph& kg,
                         std::span<const PathFormula> paths) {
  for (const auto& p : paths) out << format_formula(kg, p) << '\n';
}

}  // namespace kgpath
