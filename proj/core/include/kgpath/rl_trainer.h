#pragma once

// Reward-shaped REINFORCE retraining of a supervised policy.
//
// Per episode: roll out up to max_length sampled actions; update once with
// reward -1 over the failed (state, action) memory; on success update again
// over the successful moves with
//   R_total = w_global * r_global + w_efficiency * r_efficiency
//             + w_diversity * r_diversity,
// where diversity is measured against every path discovered so far in the
// run.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "kgpath/embedding.h"
#include "kgpath/environment.h"
#include "kgpath/kg_store.h"
#include "kgpath/policy.h"
#include "kgpath/rng.h"

namespace kgpath {

struct RetrainConfig {
  std::size_t episodes = 500;
  std::size_t max_length = 50;
  RewardWeights weights;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
};

// Unique formulas in discovery order with per-formula success counts.
class DiscoveredPathSet {
 public:
  struct Entry {
    PathFormula formula;
    std::size_t successes = 0;

    friend bool operator==(const Entry&, const Entry&) = default;
  };

  // Records one success; returns true when the formula is new.
  bool record(const PathFormula& formula, std::size_t count = 1);

  bool contains(const PathFormula& formula) const { return index_.contains(formula); }
  std::size_t successes(const PathFormula& formula) const;
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<PathFormula> formulas() const;
  // By success count descending, ties in discovery order; top_k == 0 keeps
  // every formula.
  std::vector<PathFormula> ranked(std::size_t top_k = 0) const;

  friend bool operator==(const DiscoveredPathSet& a, const DiscoveredPathSet& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::vector<Entry> entries_;
  std::map<PathFormula, std::size_t> index_;
};

struct EpisodeResult {
  bool success = false;
  // The successful moves (failed attempts excluded), reward unset.
  Trajectory trajectory;
  // Failed (state, action) attempts.
  std::vector<TrajectoryStep> failed;
  // Raw walk taken and the loop-free formula derived from it.
  Walk walk;
  Walk path;
  std::vector<EpisodeRecord> log;
};

// Samples actions from the policy until the target is reached or max_length
// actions were attempted. A pair with source == target succeeds at once
// with an empty path.
EpisodeResult run_episode(const PolicyParams& policy, const KnowledgeGraph& kg,
                          const EmbeddingTable& table, EntityPair pair,
                          std::size_t max_length, Rng& rng);

// Resumable loop state.
struct RetrainState {
  PolicyParams policy;
  AdamState optimizer;
  DiscoveredPathSet paths;
  std::size_t next_episode = 0;
  std::size_t successes = 0;
  std::size_t penalty_updates = 0;
  std::size_t success_updates = 0;
  Rng rng;

  friend bool operator==(const RetrainState&, const RetrainState&) = default;
};

RetrainState begin_retrain(PolicyParams supervised, const RetrainConfig& config);

struct EpisodeSummary {
  std::size_t episode = 0;  // 0-based
  bool success = false;
  double total_reward = 0.0;  // R_total on success, 0 otherwise
  std::size_t path_length = 0;
};

// Runs episodes [state.next_episode, min(stop_after, config.episodes)).
// Positives are visited round-robin. A NumericError leaves `state` at the
// last completed episode.
void continue_retrain(RetrainState& state, const KnowledgeGraph& kg,
                      const EmbeddingTable& table, std::span<const EntityPair> positives,
                      const RetrainConfig& config, std::size_t stop_after,
                      const std::function<void(const EpisodeSummary&)>& on_episode = {});

struct RetrainResult {
  PolicyParams policy;
  DiscoveredPathSet paths;
  std::size_t episodes = 0;
  std::size_t successes = 0;
};

RetrainResult retrain(PolicyParams supervised, const KnowledgeGraph& kg,
                      const EmbeddingTable& table, std::span<const EntityPair> positives,
                      const RetrainConfig& config);

// Binary snapshot of RetrainState for resumable runs.
void save_retrain_state(std::ostream& out, const RetrainState& state);
RetrainState load_retrain_state(std::istream& in);

}  // namespace kgpath
