#include "kgpath/policy.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "binary_io.h"

namespace kgpath {
namespace {

constexpr std::string_view kPolicyMagic = "KGPPOL01";

struct Activations {
  Eigen::VectorXd z1, h1, z2, h2, logits;
};

Activations run_layers(const PolicyParams& p, const StateVector& s) {
  if (static_cast<std::size_t>(s.size()) != p.input_dim()) {
    throw std::invalid_argument("state length " + std::to_string(s.size()) +
                                " does not match policy input " +
                                std::to_string(p.input_dim()));
  }
  Activations a;
  a.z1 = p.w1 * s + p.b1;
  a.h1 = a.z1.cwiseMax(0.0);
  a.z2 = p.w2 * a.h1 + p.b2;
  a.h2 = a.z2.cwiseMax(0.0);
  a.logits = p.w3 * a.h2 + p.b3;
  return a;
}

// log-softmax with max subtraction.
Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

template <typename F>
void for_each_tensor(PolicyParams& a, const PolicyParams& b, F&& f) {
  f(a.w1, b.w1, true);
  f(a.b1, b.b1, false);
  f(a.w2, b.w2, true);
  f(a.b2, b.b2, false);
  f(a.w3, b.w3, true);
  f(a.b3, b.b3, false);
}

void write_params(std::ostream& out, const PolicyParams& p) {
  detail::write_matrix(out, p.w1);
  detail::write_matrix(out, p.b1);
  detail::write_matrix(out, p.w2);
  detail::write_matrix(out, p.b2);
  detail::write_matrix(out, p.w3);
  detail::write_matrix(out, p.b3);
}

void read_params(std::istream& in, PolicyParams& p) {
  detail::read_matrix(in, p.w1);
  detail::read_matrix(in, p.b1);
  detail::read_matrix(in, p.w2);
  detail::read_matrix(in, p.b2);
  detail::read_matrix(in, p.w3);
  detail::read_matrix(in, p.b3);
}

}  // namespace

PolicyParams PolicyParams::zeros(std::size_t input, std::size_t hidden1, std::size_t hidden2,
                                 std::size_t actions) {
  const auto in = static_cast<Eigen::Index>(input);
  const auto h1 = static_cast<Eigen::Index>(hidden1);
  const auto h2 = static_cast<Eigen::Index>(hidden2);
  const auto a = static_cast<Eigen::Index>(actions);
  return {Eigen::MatrixXd::Zero(h1, in), Eigen::VectorXd::Zero(h1),
          Eigen::MatrixXd::Zero(h2, h1), Eigen::VectorXd::Zero(h2),
          Eigen::MatrixXd::Zero(a, h2),  Eigen::VectorXd::Zero(a)};
}

bool PolicyParams::same_shape(const PolicyParams& o) const {
  return w1.rows() == o.w1.rows() && w1.cols() == o.w1.cols() && b1.size() == o.b1.size() &&
         w2.rows() == o.w2.rows() && w2.cols() == o.w2.cols() && b2.size() == o.b2.size() &&
         w3.rows() == o.w3.rows() && w3.cols() == o.w3.cols() && b3.size() == o.b3.size();
}

bool PolicyParams::all_finite() const {
  return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite() &&
         w3.allFinite() && b3.allFinite();
}

double PolicyParams::max_abs() const {
  double m = 0.0;
  auto visit = [&m](const auto& t) {
    if (t.size() > 0) m = std::max(m, t.cwiseAbs().maxCoeff());
  };
  visit(w1);
  visit(b1);
  visit(w2);
  visit(b2);
  visit(w3);
  visit(b3);
  return m;
}

PolicyParams& PolicyParams::operator+=(const PolicyParams& other) {
  if (!same_shape(other)) throw std::invalid_argument("policy shape mismatch");
  for_each_tensor(*this, other, [](auto& x, const auto& y, bool) { x += y; });
  return *this;
}

PolicyParams& PolicyParams::operator*=(double scale) {
  w1 *= scale;
  b1 *= scale;
  w2 *= scale;
  b2 *= scale;
  w3 *= scale;
  b3 *= scale;
  return *this;
}

PolicyParams init_policy(std::size_t state_dim, std::size_t hidden1, std::size_t hidden2,
                         std::size_t action_count, std::uint64_t seed) {
  if (state_dim == 0 || hidden1 == 0 || hidden2 == 0 || action_count == 0) {
    throw std::invalid_argument("policy dimensions must be positive");
  }
  PolicyParams p = PolicyParams::zeros(state_dim, hidden1, hidden2, action_count);
  Rng rng(seed);
  auto fill = [&rng](Eigen::MatrixXd& w) {
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(w.cols())));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
  };
  fill(p.w1);
  fill(p.w2);
  fill(p.w3);
  return p;
}

ActionDistribution forward(const PolicyParams& params, const StateVector& state) {
  const Activations a = run_layers(params, state);
  return {log_softmax(a.logits).array().exp().matrix()};
}

double log_probability(const PolicyParams& params, const StateVector& state,
                       RelationId action) {
  if (action >= params.action_count()) throw std::out_of_range("action outside the policy");
  return log_softmax(run_layers(params, state).logits)(action);
}

RelationId sample_action(const ActionDistribution& dist, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double u = uniform(rng);
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] <= 0.0) continue;
    last_positive = i;
    cumulative += dist[i];
    if (u < cumulative) return static_cast<RelationId>(i);
  }
  // Rounding left the total a hair below u.
  return static_cast<RelationId>(last_positive);
}

PolicyGradient reinforce_gradient(const PolicyParams& params, const Trajectory& trajectory) {
  if (trajectory.steps.empty()) throw std::invalid_argument("empty trajectory");
  PolicyGradient g = PolicyParams::zeros_like(params);
  for (const TrajectoryStep& step : trajectory.steps) {
    if (step.action >= params.action_count()) {
      throw std::out_of_range("action outside the policy");
    }
    const Activations a = run_layers(params, step.state);
    Eigen::VectorXd delta3 = -log_softmax(a.logits).array().exp().matrix();
    delta3(step.action) += 1.0;
    delta3 *= trajectory.reward;

    const Eigen::VectorXd delta2 =
        (params.w3.transpose() * delta3).cwiseProduct((a.z2.array() > 0.0).cast<double>().matrix());
    const Eigen::VectorXd delta1 =
        (params.w2.transpose() * delta2).cwiseProduct((a.z1.array() > 0.0).cast<double>().matrix());

    g.w3.noalias() += delta3 * a.h2.transpose();
    g.b3 += delta3;
    g.w2.noalias() += delta2 * a.h1.transpose();
    g.b2 += delta2;
    g.w1.noalias() += delta1 * step.state.transpose();
    g.b1 += delta1;
  }
  return g;
}

void apply_update(PolicyParams& params, const PolicyGradient& gradient, AdamState& state,
                  const OptimizerConfig& config) {
  if (!params.same_shape(gradient)) throw std::invalid_argument("gradient shape mismatch");
  if (!gradient.all_finite()) throw NumericError("non-finite policy gradient");
  if (state.step == 0 && !state.first_moment.same_shape(params)) {
    state = AdamState::for_params(params);
  }
  if (!state.first_moment.same_shape(params) || !state.second_moment.same_shape(params)) {
    throw std::invalid_argument("optimizer state shape mismatch");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);

  auto update = [&](auto& param, const auto& grad, auto& m, auto& v, bool is_weight) {
    using T = std::decay_t<decltype(param)>;
    const T g = (is_weight && config.l2 != 0.0) ? T(grad - config.l2 * param) : T(grad);
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
    param.array() +=
        config.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + config.epsilon);
  };
  update(params.w1, gradient.w1, state.first_moment.w1, state.second_moment.w1, true);
  update(params.b1, gradient.b1, state.first_moment.b1, state.second_moment.b1, false);
  update(params.w2, gradient.w2, state.first_moment.w2, state.second_moment.w2, true);
  update(params.b2, gradient.b2, state.first_moment.b2, state.second_moment.b2, false);
  update(params.w3, gradient.w3, state.first_moment.w3, state.second_moment.w3, true);
  update(params.b3, gradient.b3, state.first_moment.b3, state.second_moment.b3, false);
}

void save_policy(std::ostream& out, const PolicyParams& params, const AdamState* optimizer,
                 CheckpointTag tag) {
  detail::write_magic(out, kPolicyMagic);
  detail::write_u64(out, params.input_dim());
  detail::write_u64(out, params.hidden1());
  detail::write_u64(out, params.hidden2());
  detail::write_u64(out, params.action_count());
  detail::write_u64(out, tag.config_hash);
  detail::write_u64(out, tag.seed);
  detail::write_u64(out, optimizer != nullptr ? 1 : 0);
  write_params(out, params);
  if (optimizer != nullptr) {
    detail::write_u64(out, optimizer->step);
    write_params(out, optimizer->first_moment);
    write_params(out, optimizer->second_moment);
  }
}

PolicyCheckpoint load_policy(std::istream& in) {
  detail::expect_magic(in, kPolicyMagic);
  const auto input = detail::read_u64(in);
  const auto h1 = detail::read_u64(in);
  const auto h2 = detail::read_u64(in);
  const auto actions = detail::read_u64(in);
  PolicyCheckpoint ckpt;
  ckpt.tag.config_hash = detail::read_u64(in);
  ckpt.tag.seed = detail::read_u64(in);
  const bool has_optimizer = detail::read_u64(in) != 0;
  ckpt.params = PolicyParams::zeros(input, h1, h2, actions);
  read_params(in, ckpt.params);
  if (has_optimizer) {
    AdamState state = AdamState::for_params(ckpt.params);
    state.step = detail::read_u64(in);
    read_params(in, state.first_moment);
    read_params(in, state.second_moment);
    ckpt.optimizer = std::move(state);
  }
  return ckpt;
}

}  // namespace kgpath
