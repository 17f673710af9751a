#include "kgpath/policy.h"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "gradient_check.h"

namespace kgpath {
namespace {

StateVector state_of(std::initializer_list<double> values) {
  StateVector s(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double v : values) s(i++) = v;
  return s;
}

TEST(Forward, ZeroWeightsGiveUniform) {
  const PolicyParams p = PolicyParams::zeros(4, 3, 3, 5);
  const ActionDistribution d = forward(p, state_of({1, 2, 3, 4}));
  ASSERT_EQ(d.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(d[i], 0.2);
}

TEST(Forward, BiasLogitsHandComputed) {
  PolicyParams p = PolicyParams::zeros(2, 2, 2, 2);
  p.b3 << std::log(3.0), 0.0;
  const ActionDistribution d = forward(p, state_of({0.3, -0.7}));
  EXPECT_NEAR(d[0], 0.75, 1e-12);
  EXPECT_NEAR(d[1], 0.25, 1e-12);
}

TEST(Forward, SumsToOneAndStaysFiniteForLargeLogits) {
  PolicyParams p = init_policy(6, 8, 8, 10, 3);
  p.b3(2) = 800.0;  // would overflow a naive exp
  const ActionDistribution d = forward(p, state_of({1, -1, 2, 0, 3, 1}));
  EXPECT_TRUE(d.probs.allFinite());
  EXPECT_NEAR(d.probs.sum(), 1.0, 1e-12);
  EXPECT_NEAR(d[2], 1.0, 1e-12);
  EXPECT_TRUE(std::isfinite(log_probability(p, state_of({1, -1, 2, 0, 3, 1}), 0)));
}

TEST(Forward, RejectsWrongStateLength) {
  const PolicyParams p = PolicyParams::zeros(4, 3, 3, 5);
  EXPECT_THROW(forward(p, state_of({1, 2})), std::invalid_argument);
}

TEST(Init, ShapesAndZeroBiases) {
  const PolicyParams p = init_policy(6, 5, 7, 4, 1);
  EXPECT_EQ(p.input_dim(), 6u);
  EXPECT_EQ(p.hidden1(), 5u);
  EXPECT_EQ(p.hidden2(), 7u);
  EXPECT_EQ(p.action_count(), 4u);
  EXPECT_TRUE(p.b1.isZero());
  EXPECT_FALSE(p.w1.isZero());
  EXPECT_EQ(init_policy(6, 5, 7, 4, 1), p);
  EXPECT_THROW(init_policy(0, 5, 7, 4, 1), std::invalid_argument);
}

TEST(Sample, FrequenciesMatchProbabilities) {
  ActionDistribution d{Eigen::VectorXd::Constant(4, 0.25)};
  Rng rng(123);
  std::vector<int> counts(4, 0);
  const int draws = 40000;
  for (int i = 0; i < draws; ++i) ++counts[sample_action(d, rng)];
  for (int c : counts) EXPECT_NEAR(static_cast<double>(c) / draws, 0.25, 0.01);
}

TEST(Sample, NeverReturnsZeroProbabilityAction) {
  ActionDistribution d{Eigen::VectorXd(4)};
  d.probs << 0.0, 0.5, 0.0, 0.5;
  Rng rng(7);
  for (int i = 0; i < 20000; ++i) {
    const RelationId a = sample_action(d, rng);
    EXPECT_TRUE(a == 1 || a == 3);
  }
  ActionDistribution tail{Eigen::VectorXd(3)};
  tail.probs << 1.0, 0.0, 0.0;
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_action(tail, rng), 0u);
}

TEST(Reinforce, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    EXPECT_LT(testing::reinforce_gradient_error(seed), 1e-4) << "seed " << seed;
  }
}

TEST(Reinforce, LinearInReward) {
  const PolicyParams p = init_policy(4, 6, 6, 3, 2);
  Trajectory t{{{state_of({0.1, 0.2, -0.3, 0.4}), 1}, {state_of({1, 0, 0, -1}), 2}}, 1.0};
  const Eigen::VectorXd g1 = testing::flatten(reinforce_gradient(p, t));
  t.reward = -2.5;
  const Eigen::VectorXd g2 = testing::flatten(reinforce_gradient(p, t));
  EXPECT_LT((g2 + 2.5 * g1).norm(), 1e-12 * std::max(1.0, g1.norm()));
  t.reward = 0.0;
  EXPECT_TRUE(testing::flatten(reinforce_gradient(p, t)).isZero());
}

TEST(Reinforce, Errors) {
  const PolicyParams p = init_policy(2, 3, 3, 3, 2);
  EXPECT_THROW(reinforce_gradient(p, Trajectory{}), std::invalid_argument);
  Trajectory bad{{{state_of({0.0, 1.0}), 3}}, 1.0};
  EXPECT_THROW(reinforce_gradient(p, bad), std::out_of_range);
}

TEST(Adam, ZeroGradientWithoutDecayIsNoOp) {
  PolicyParams p = init_policy(3, 4, 4, 2, 5);
  const PolicyParams before = p;
  AdamState state = AdamState::for_params(p);
  OptimizerConfig config;
  config.l2 = 0.0;
  apply_update(p, PolicyParams::zeros_like(p), state, config);
  EXPECT_EQ(p, before);
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, DecayShrinksWeightsButNotBiases) {
  PolicyParams p = init_policy(3, 4, 4, 2, 5);
  p.b1.setConstant(0.5);
  const PolicyParams before = p;
  AdamState state = AdamState::for_params(p);
  OptimizerConfig config;
  config.l2 = 0.1;
  apply_update(p, PolicyParams::zeros_like(p), state, config);
  EXPECT_LT(p.w1.norm(), before.w1.norm());
  EXPECT_EQ(p.b1, before.b1);
}

TEST(Adam, BanditProbabilityClimbsMonotonically) {
  PolicyParams p = init_policy(2, 8, 8, 3, 11);
  const StateVector s = state_of({0.4, -0.2});
  AdamState state = AdamState::for_params(p);
  OptimizerConfig config;
  config.learning_rate = 1e-2;
  double last = forward(p, s)[0];
  for (int i = 0; i < 100; ++i) {
    apply_update(p, reinforce_gradient(p, Trajectory{{{s, 0}}, 1.0}), state, config);
    const double now = forward(p, s)[0];
    EXPECT_GT(now, last) << "step " << i;
    last = now;
  }
  EXPECT_GT(last, 0.9);
  EXPECT_EQ(state.step, 100u);
}

TEST(Adam, SmallStepRaisesRewardedAction) {
  PolicyParams p = init_policy(2, 8, 8, 3, 4);
  const StateVector s = state_of({1.0, 0.5});
  AdamState state = AdamState::for_params(p);
  OptimizerConfig config;
  config.learning_rate = 1e-4;
  const double before = forward(p, s)[1];
  apply_update(p, reinforce_gradient(p, Trajectory{{{s, 1}}, 1.0}), state, config);
  EXPECT_GT(forward(p, s)[1], before);
}

TEST(Adam, NonFiniteGradientLeavesStateUntouched) {
  PolicyParams p = init_policy(2, 3, 3, 2, 4);
  const PolicyParams before = p;
  AdamState state = AdamState::for_params(p);
  PolicyGradient g = PolicyParams::zeros_like(p);
  g.w2(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(apply_update(p, g, state, {}), NumericError);
  EXPECT_EQ(p, before);
  EXPECT_EQ(state.step, 0u);
  EXPECT_THROW(apply_update(p, PolicyParams::zeros(2, 3, 3, 5), state, {}),
               std::invalid_argument);
}

TEST(Checkpoint, RoundTripWithOptimizer) {
  PolicyParams p = init_policy(4, 5, 6, 3, 9);
  AdamState state = AdamState::for_params(p);
  apply_update(p, reinforce_gradient(p, Trajectory{{{state_of({1, 2, 3, 4}), 2}}, 1.0}), state,
               {});
  std::stringstream buf;
  save_policy(buf, p, &state, {0xabcdef, 77});
  const PolicyCheckpoint back = load_policy(buf);
  EXPECT_EQ(back.params, p);
  ASSERT_TRUE(back.optimizer.has_value());
  EXPECT_EQ(*back.optimizer, state);
  EXPECT_EQ(back.tag, (CheckpointTag{0xabcdef, 77}));
}

TEST(Checkpoint, RoundTripWithoutOptimizer) {
  const PolicyParams p = init_policy(2, 2, 2, 2, 1);
  std::stringstream buf;
  save_policy(buf, p);
  const PolicyCheckpoint back = load_policy(buf);
  EXPECT_EQ(back.params, p);
  EXPECT_FALSE(back.optimizer.has_value());
  std::istringstream junk("KGPPOL0");
  EXPECT_ANY_THROW(load_policy(junk));
}

}  // namespace
}  // namespace kgpath
