#pragma once

// Ranking metrics (link-prediction and fact-prediction MAP), succ@k of a
// policy, discovered-path statistics, and report writers.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kgpath/embedding.h"
#include "kgpath/kg_store.h"
#include "kgpath/policy.h"
#include "kgpath/rl_trainer.h"

namespace kgpath {

// Mean over relevant positions i of (#relevant in top i) / i. A ranking
// with no relevant item scores 0 and logs a warning.
double average_precision(const std::vector<bool>& ranking);

using PairScorer = std::function<double(const EntityPair&)>;

// Looks scores up by pair; unknown pairs score -infinity.
PairScorer scorer_from_rows(std::span<const LabeledPair> rows, std::span<const double> scores);

struct RankedCandidate {
  EntityId tail = 0;
  double score = 0.0;
  bool relevant = false;
};

struct RankedQuery {
  EntityId head = 0;
  std::vector<RankedCandidate> candidates;  // score descending, ties by tail id
};

// One query per distinct test head, candidates being that head's test
// positives and negatives.
std::vector<RankedQuery> rank_queries(const PairScorer& scorer, const TaskSplit& split);

struct MapResult {
  double map = 0.0;
  std::size_t queries = 0;
  std::size_t skipped = 0;  // queries without candidates
};

// Macro-average of per-query AP.
MapResult map_link_prediction(const PairScorer& scorer, const TaskSplit& split);

// AP of one ranking of every test positive and negative; ties broken by
// (source, target) ascending.
double map_fact_prediction(const PairScorer& scorer, const TaskSplit& split);

// Fraction of (pair, trial) rollouts reaching the target within k sampled
// actions. Rollout (i, t) draws from its own stream derived from
// (seed, i, t), so results do not depend on k beyond truncation.
double success_ratio_at(const PolicyParams& policy, const KnowledgeGraph& kg,
                        const EmbeddingTable& table, std::span<const EntityPair> pairs,
                        std::size_t k, std::size_t trials, std::uint64_t seed);

// succ@1 ... succ@max_k from the same rollouts.
std::vector<double> success_curve(const PolicyParams& policy, const KnowledgeGraph& kg,
                                  const EmbeddingTable& table,
                                  std::span<const EntityPair> pairs, std::size_t max_k,
                                  std::size_t trials, std::uint64_t seed);

struct PathStatistics {
  std::size_t count = 0;
  double mean_length = 0.0;
  std::map<std::size_t, std::size_t> length_histogram;
};

PathStatistics path_statistics(const DiscoveredPathSet& paths);

struct EvalReport {
  std::string task;
  MapResult link_prediction;
  double fact_prediction = 0.0;
  PathStatistics paths;
  std::vector<double> success_curve;  // index k-1 holds succ@k
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
};

// Key-value block per task followed by "task<TAB>metric<TAB>value" lines,
// plus an overall line when more than one task is reported.
void write_report(std::ostream& out, std::span<const EvalReport> reports);

// Two whitespace-free columns per line for plotting tools.
void write_two_column(std::ostream& out, std::span<const std::pair<double, double>> rows);

}  // namespace kgpath
