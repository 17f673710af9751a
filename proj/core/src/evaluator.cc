#include "kgpath/evaluator.h"

#include <algorithm>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <ostream>

#include "kgpath/environment.h"

namespace kgpath {

double average_precision(const std::vector<bool>& ranking) {
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    if (!ranking[i]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  if (hits == 0) {
    std::cerr << "warning: average precision of a ranking with no relevant item\n";
    return 0.0;
  }
  return sum / static_cast<double>(hits);
}

PairScorer scorer_from_rows(std::span<const LabeledPair> rows, std::span<const double> scores) {
  if (rows.size() != scores.size()) throw std::invalid_argument("row/score count mismatch");
  std::map<EntityPair, double> table;
  for (std::size_t i = 0; i < rows.size(); ++i) table[rows[i].pair] = scores[i];
  return [table = std::move(table)](const EntityPair& p) {
    auto it = table.find(p);
    return it == table.end() ? -std::numeric_limits<double>::infinity() : it->second;
  };
}

std::vector<RankedQuery> rank_queries(const PairScorer& scorer, const TaskSplit& split) {
  std::map<EntityId, RankedQuery> by_head;
  auto add = [&](const EntityPair& p, bool relevant) {
    auto& q = by_head[p.source];
    q.head = p.source;
    q.candidates.push_back({p.target, scorer(p), relevant});
  };
  for (const auto& p : split.test_positives) add(p, true);
  for (const auto& p : split.test_negatives) add(p, false);

  std::vector<RankedQuery> out;
  out.reserve(by_head.size());
  for (auto& [head, q] : by_head) {
    std::sort(q.candidates.begin(), q.candidates.end(),
              [](const RankedCandidate& a, const RankedCandidate& b) {
                if (a.score != b.score) return a.score > b.score;
                return a.tail < b.tail;
              });
    out.push_back(std::move(q));
  }
  return out;
}

MapResult map_link_prediction(const PairScorer& scorer, const TaskSplit& split) {
  MapResult result;
  double total = 0.0;
  for (const RankedQuery& q : rank_queries(scorer, split)) {
    if (q.candidates.empty()) {
      ++result.skipped;
      continue;
    }
    std::vector<bool> relevance;
    relevance.reserve(q.candidates.size());
    for (const auto& c : q.candidates) relevance.push_back(c.relevant);
    total += average_precision(relevance);
    ++result.queries;
  }
  result.map = result.queries == 0 ? 0.0 : total / static_cast<double>(result.queries);
  return result;
}

double map_fact_prediction(const PairScorer& scorer, const TaskSplit& split) {
  struct Item {
    EntityPair pair;
    double score;
    bool relevant;
  };
  std::vector<Item> items;
  for (const auto& p : split.test_positives) items.push_back({p, scorer(p), true});
  for (const auto& p : split.test_negatives) items.push_back({p, scorer(p), false});
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.pair < b.pair;
  });
  std::vector<bool> relevance;
  relevance.reserve(items.size());
  for (const auto& it : items) relevance.push_back(it.relevant);
  return average_precision(relevance);
}

namespace {

// Step (1-based) at which the rollout first reached the target, or 0.
std::size_t first_hit(const PolicyParams& policy, const KnowledgeGraph& kg,
                      const EmbeddingTable& table, EntityPair pair, std::size_t max_steps,
                      Rng& rng) {
  EnvState state = reset(kg, pair);
  if (state.at_target()) return 1;
  while (state.steps_taken < max_steps) {
    const StateVector s = embed_state(table, state.current, state.target);
    const RelationId action = sample_action(forward(policy, s), rng);
    if (advance(kg, state, action, rng) == StepKind::kReachedTarget) return state.steps_taken;
  }
  return 0;
}

}  // namespace

std::vector<double> success_curve(const PolicyParams& policy, const KnowledgeGraph& kg,
                                  const EmbeddingTable& table,
                                  std::span<const EntityPair> pairs, std::size_t max_k,
                                  std::size_t trials, std::uint64_t seed) {
  if (max_k == 0) throw std::invalid_argument("k must be >= 1");
  if (trials == 0) throw std::invalid_argument("trials must be >= 1");
  std::vector<double> hits_at(max_k + 1, 0.0);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t t = 0; t < trials; ++t) {
      Rng rng(derive_seed(derive_seed(seed, i), t));
      const std::size_t hit = first_hit(policy, kg, table, pairs[i], max_k, rng);
      if (hit > 0) hits_at[hit] += 1.0;
    }
  }
  std::vector<double> curve(max_k, 0.0);
  const double total = static_cast<double>(pairs.size() * trials);
  double cumulative = 0.0;
  for (std::size_t k = 1; k <= max_k; ++k) {
    cumulative += hits_at[k];
    curve[k - 1] = total > 0 ? cumulative / total : 0.0;
  }
  return curve;
}

double success_ratio_at(const PolicyParams& policy, const KnowledgeGraph& kg,
                        const EmbeddingTable& table, std::span<const EntityPair> pairs,
                        std::size_t k, std::size_t trials, std::uint64_t seed) {
  return success_curve(policy, kg, table, pairs, k, trials, seed).back();
}

PathStatistics path_statistics(const DiscoveredPathSet& paths) {
  PathStatistics stats;
  stats.count = paths.size();
  double total = 0.0;
  for (const auto& e : paths.entries()) {
    ++stats.length_histogram[e.formula.size()];
    total += static_cast<double>(e.formula.size());
  }
  stats.mean_length = stats.count == 0 ? 0.0 : total / static_cast<double>(stats.count);
  return stats;
}

void write_report(std::ostream& out, std::span<const EvalReport> reports) {
  const auto old_precision = out.precision(6);
  const auto old_flags = out.flags();
  out << std::fixed;
  for (const EvalReport& r : reports) {
    out << "[task " << r.task << "]\n";
    out << "config_hash = " << std::hex << std::setw(16) << std::setfill('0') << r.config_hash
        << std::dec << std::setfill(' ') << '\n';
    out << "seed = " << r.seed << '\n';
    out << "link_prediction_map = " << r.link_prediction.map << '\n';
    out << "link_prediction_queries = " << r.link_prediction.queries << '\n';
    out << "link_prediction_skipped = " << r.link_prediction.skipped << '\n';
    out << "fact_prediction_map = " << r.fact_prediction << '\n';
    out << "path_count = " << r.paths.count << '\n';
    out << "path_mean_length = " << r.paths.mean_length << '\n';
    for (const auto& [len, count] : r.paths.length_histogram) {
      out << "path_length_" << len << " = " << count << '\n';
    }
    for (std::size_t k = 0; k < r.success_curve.size(); ++k) {
      out << "succ_" << (k + 1) << " = " << r.success_curve[k] << '\n';
    }
    out << '\n';
  }
  for (const EvalReport& r : reports) {
    out << r.task << "\tlink_map\t" << r.link_prediction.map << '\n';
    out << r.task << "\tfact_map\t" << r.fact_prediction << '\n';
    out << r.task << "\tpath_count\t" << r.paths.count << '\n';
    if (!r.success_curve.empty()) {
      out << r.task << "\tsucc_" << r.success_curve.size() << '\t' << r.success_curve.back()
          << '\n';
    }
  }
  if (reports.size() > 1) {
    double link = 0.0;
    double fact = 0.0;
    for (const auto& r : reports) {
      link += r.link_prediction.map;
      fact += r.fact_prediction;
    }
    const auto n = static_cast<double>(reports.size());
    out << "overall\tlink_map\t" << link / n << '\n';
    out << "overall\tfact_map\t" << fact / n << '\n';
  }
  out.precision(old_precision);
  out.flags(old_flags);
}

void write_two_column(std::ostream& out, std::span<const std::pair<double, double>> rows) {
  for (const auto& [x, y] : rows) out << x << '\t' << y << '\n';
}

}  // namespace kgpath
