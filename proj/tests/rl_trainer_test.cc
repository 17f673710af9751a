#include "kgpath/rl_trainer.h"

#include <gtest/gtest.h>

#include <sstream>

#include "kgpath/reasoner.h"
#include "kgpath/supervised_trainer.h"
#include "kgpath/synthetic.h"
#include "test_support.h"

namespace kgpath {
namespace {

using testing::named_graph;

TEST(DiscoveredPathSet, CountsAndRanks) {
  DiscoveredPathSet set;
  EXPECT_TRUE(set.record({1, 2}));
  EXPECT_TRUE(set.record({3}));
  EXPECT_FALSE(set.record({3}));
  EXPECT_TRUE(set.record({4}));
  EXPECT_FALSE(set.record({4}, 2));
  EXPECT_EQ(set.size(), 3u);
  EXPECT_EQ(set.successes({4}), 3u);
  EXPECT_EQ(set.successes({9}), 0u);
  EXPECT_EQ(set.formulas(), (std::vector<PathFormula>{{1, 2}, {3}, {4}}));
  EXPECT_EQ(set.ranked(), (std::vector<PathFormula>{{4}, {3}, {1, 2}}));
  EXPECT_EQ(set.ranked(1), (std::vector<PathFormula>{{4}}));
}

// Small planted-rule task trained just far enough for the agent to walk it.
struct Fixture {
  SyntheticTask task;
  EmbeddingTable table;
  PolicyParams supervised;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    PlantedRuleSpec spec;
    spec.positive_pairs = 20;
    spec.entity_count = 160;
    spec.noise_edges = 200;
    spec.seed = 3;
    Fixture out{generate(spec), {}, {}};
    EmbeddingConfig ec;
    ec.dim = 16;
    ec.epochs = 200;
    ec.seed = 1;
    out.table = train_translation_embedding(out.task.graph, ec);
    SupervisedConfig sc;
    sc.episodes = 200;
    sc.seed = 2;
    out.supervised = train_supervised(init_policy(32, 32, 32, out.task.graph.relation_count(), 3),
                                      out.task.graph, out.table, out.task.split.train_positives,
                                      sc)
                         .policy;
    return out;
  }();
  return f;
}

TEST(RunEpisode, TrivialPairSucceedsImmediately) {
  const KnowledgeGraph kg = named_graph({{"a", "r", "b"}});
  const EmbeddingTable t = init_embedding(2, 2, 2, 1);
  Rng rng(1);
  const auto r = run_episode(init_policy(4, 3, 3, 2, 1), kg, t, {0, 0}, 10, rng);
  EXPECT_TRUE(r.success);
  EXPECT_TRUE(r.path.relations.empty());
  EXPECT_TRUE(r.log.empty());
}

TEST(RunEpisode, RecordsAttemptsAndMoves) {
  const auto& f = fixture();
  Rng rng(5);
  for (const auto& pair : f.task.split.train_positives) {
    const auto r = run_episode(f.supervised, f.task.graph, f.table, pair, 50, rng);
    EXPECT_EQ(r.log.size(), r.walk.relations.size() + r.failed.size());
    EXPECT_EQ(r.trajectory.steps.size(), r.walk.relations.size());
    EXPECT_LE(r.log.size(), 50u);
    if (r.success) {
      EXPECT_EQ(r.walk.entities.back(), pair.target);
      EXPECT_TRUE(bidirectional_verify(f.task.graph, r.path.relations, pair).connected);
    }
  }
}

TEST(Retrain, GlobalOnlyWeightsGiveUnitReward) {
  const auto& f = fixture();
  RetrainConfig config;
  config.episodes = 40;
  config.weights = {1.0, 0.0, 0.0};
  std::size_t successes = 0;
  RetrainState state = begin_retrain(f.supervised, config);
  continue_retrain(state, f.task.graph, f.table, f.task.split.train_positives, config, 40,
                   [&](const EpisodeSummary& s) {
                     if (!s.success) return;
                     ++successes;
                     EXPECT_EQ(s.total_reward, 1.0);
                   });
  EXPECT_GT(successes, 0u);
  EXPECT_EQ(state.successes, successes);
}

TEST(Retrain, EfficiencyOnlyRewardIsReciprocalLength) {
  const auto& f = fixture();
  RetrainConfig config;
  config.episodes = 40;
  config.weights = {0.0, 1.0, 0.0};
  RetrainState state = begin_retrain(f.supervised, config);
  continue_retrain(state, f.task.graph, f.table, f.task.split.train_positives, config, 40,
                   [&](const EpisodeSummary& s) {
                     if (s.success && s.path_length > 0) {
                       EXPECT_EQ(s.total_reward, 1.0 / static_cast<double>(s.path_length));
                     }
                   });
}

TEST(Retrain, DiscoversPlantedRule) {
  const auto& f = fixture();
  RetrainConfig config;
  config.episodes = 200;
  config.seed = 6;
  const auto result = retrain(f.supervised, f.task.graph, f.table,
                              f.task.split.train_positives, config);
  EXPECT_EQ(result.episodes, 200u);
  EXPECT_TRUE(result.paths.contains(f.task.rule));
  // Every discovered formula links at least one training pair.
  for (const auto& formula : result.paths.formulas()) {
    bool links = false;
    for (const auto& p : f.task.split.train_positives) {
      links = links || bidirectional_verify(f.task.graph, formula, p).connected;
    }
    EXPECT_TRUE(links) << format_formula(f.task.graph, formula);
  }
}

TEST(Retrain, ResumeFromCheckpointMatchesStraightRun) {
  const auto& f = fixture();
  RetrainConfig config;
  config.episodes = 60;
  config.seed = 12;
  const auto& pos = f.task.split.train_positives;

  RetrainState straight = begin_retrain(f.supervised, config);
  continue_retrain(straight, f.task.graph, f.table, pos, config, 60);

  RetrainState first = begin_retrain(f.supervised, config);
  continue_retrain(first, f.task.graph, f.table, pos, config, 25);
  EXPECT_EQ(first.next_episode, 25u);
  std::stringstream buf;
  save_retrain_state(buf, first);
  RetrainState resumed = load_retrain_state(buf);
  EXPECT_EQ(resumed, first);
  continue_retrain(resumed, f.task.graph, f.table, pos, config, 60);
  EXPECT_EQ(resumed, straight);
}

TEST(Retrain, ZeroEpisodesReturnsSupervisedPolicy) {
  const auto& f = fixture();
  RetrainConfig config;
  config.episodes = 0;
  const auto result =
      retrain(f.supervised, f.task.graph, f.table, f.task.split.train_positives, config);
  EXPECT_EQ(result.policy, f.supervised);
  EXPECT_TRUE(result.paths.empty());
}

}  // namespace
}  // namespace kgpath
