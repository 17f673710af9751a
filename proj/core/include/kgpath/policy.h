#pragma once

// Two-hidden-layer ReLU policy network over the relation action space,
// trained by REINFORCE with Adam and L2 weight decay.

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "kgpath/embedding.h"
#include "kgpath/rng.h"
#include "kgpath/types.h"

namespace kgpath {

// Also used as the shape of a gradient and of Adam's moment estimates.
struct PolicyParams {
  Eigen::MatrixXd w1;  // hidden1 x input
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // hidden2 x hidden1
  Eigen::VectorXd b2;
  Eigen::MatrixXd w3;  // actions x hidden2
  Eigen::VectorXd b3;

  std::size_t input_dim() const { return static_cast<std::size_t>(w1.cols()); }
  std::size_t hidden1() const { return static_cast<std::size_t>(w1.rows()); }
  std::size_t hidden2() const { return static_cast<std::size_t>(w2.rows()); }
  std::size_t action_count() const { return static_cast<std::size_t>(w3.rows()); }

  static PolicyParams zeros(std::size_t input, std::size_t hidden1, std::size_t hidden2,
                            std::size_t actions);
  static PolicyParams zeros_like(const PolicyParams& p) {
    return zeros(p.input_dim(), p.hidden1(), p.hidden2(), p.action_count());
  }

  bool same_shape(const PolicyParams& other) const;
  bool all_finite() const;
  // Largest absolute entry across all tensors.
  double max_abs() const;

  PolicyParams& operator+=(const PolicyParams& other);
  PolicyParams& operator*=(double scale);

  friend bool operator==(const PolicyParams& a, const PolicyParams& b) {
    return a.same_shape(b) && a.w1 == b.w1 && a.b1 == b.b1 && a.w2 == b.w2 &&
           a.b2 == b.b2 && a.w3 == b.w3 && a.b3 == b.b3;
  }
};

using PolicyGradient = PolicyParams;

struct ActionDistribution {
  Eigen::VectorXd probs;

  std::size_t size() const { return static_cast<std::size_t>(probs.size()); }
  double operator[](std::size_t i) const { return probs(static_cast<Eigen::Index>(i)); }
};

// Weights ~ N(0, 1/fan_in), biases zero. Throws std::invalid_argument when
// a dimension is zero.
PolicyParams init_policy(std::size_t state_dim, std::size_t hidden1, std::size_t hidden2,
                         std::size_t action_count, std::uint64_t seed);

// affine -> ReLU -> affine -> ReLU -> affine -> softmax. Throws
// std::invalid_argument when the state length does not match.
ActionDistribution forward(const PolicyParams& params, const StateVector& state);

// log pi(action | state), computed in log-space.
double log_probability(const PolicyParams& params, const StateVector& state,
                       RelationId action);

// Inverse-CDF draw; zero-probability entries are never returned.
RelationId sample_action(const ActionDistribution& dist, Rng& rng);

struct TrajectoryStep {
  StateVector state;
  RelationId action = 0;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  double reward = 1.0;  // scales every step's log-probability gradient
};

// Gradient of reward * sum_t log pi(a_t | s_t). Throws std::invalid_argument
// on an empty trajectory and std::out_of_range on an action outside the
// output layer.
PolicyGradient reinforce_gradient(const PolicyParams& params, const Trajectory& trajectory);

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double l2 = 1e-5;  // weight decay, weights only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  PolicyParams first_moment;
  PolicyParams second_moment;
  std::uint64_t step = 0;

  static AdamState for_params(const PolicyParams& params) {
    return {PolicyParams::zeros_like(params), PolicyParams::zeros_like(params), 0};
  }

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// One Adam ascent step on the objective whose gradient is `gradient`, with
// L2 decay pulling weight matrices (not biases) toward zero. Throws
// NumericError on a non-finite gradient and std::invalid_argument on a shape
// mismatch; params and state are untouched in both cases.
void apply_update(PolicyParams& params, const PolicyGradient& gradient, AdamState& state,
                  const OptimizerConfig& config);

// Identifies the run that wrote a policy checkpoint.
struct CheckpointTag {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const CheckpointTag&, const CheckpointTag&) = default;
};

struct PolicyCheckpoint {
  PolicyParams params;
  std::optional<AdamState> optimizer;
  CheckpointTag tag;
};

// Header "KGPPOL01", input/hidden1/hidden2/actions, tag, optimizer flag, all
// little-endian u64; then w1, b1, w2, b2, w3, b3 row-major as f64; then, if
// present, the Adam step count and both moment sets in the same layout.
void save_policy(std::ostream& out, const PolicyParams& params,
                 const AdamState* optimizer = nullptr, CheckpointTag tag = {});
PolicyCheckpoint load_policy(std::istream& in);

}  // namespace kgpath
