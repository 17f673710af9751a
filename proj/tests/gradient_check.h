#pragma once

// Central finite-difference checks for the embedding hinge loss and the
// REINFORCE objective on small random instances.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "kgpath/embedding.h"
#include "kgpath/policy.h"
#include "kgpath/rng.h"

namespace kgpath::testing {

inline double relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  const double scale = std::max(analytic.norm(), numeric.norm());
  if (scale == 0.0) return 0.0;
  return (analytic - numeric).norm() / scale;
}

inline Eigen::VectorXd central_difference(std::vector<double*> coords,
                                          const std::function<double()>& f, double h) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(coords.size()));
  for (std::size_t i = 0; i < coords.size(); ++i) {
    double& x = *coords[i];
    const double saved = x;
    x = saved + h;
    const double up = f();
    x = saved - h;
    const double down = f();
    x = saved;
    out(static_cast<Eigen::Index>(i)) = (up - down) / (2 * h);
  }
  return out;
}

// Hinge loss over a 6-entity, 3-relation, d=4 table. Redraws until the hinge
// is active with some slack and both distances are away from zero, since the
// loss is not differentiable at those points.
inline double embedding_gradient_error(std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<EntityId> ent(0, 5);
  std::uniform_int_distribution<RelationId> rel(0, 2);
  for (;;) {
    EmbeddingTable table = init_embedding(6, 3, 4, rng());
    const Triple pos{ent(rng), rel(rng), ent(rng)};
    Triple neg = pos;
    (rng() & 1 ? neg.head : neg.tail) = ent(rng);
    if (neg == pos) continue;
    const double margin = 1.0;
    auto dist = [&](const Triple& t) {
      return (table.entities.row(t.head) + table.relations.row(t.relation) -
              table.entities.row(t.tail)).norm();
    };
    const double arg = margin + dist(pos) - dist(neg);
    if (arg < 1e-2 || dist(pos) < 1e-2 || dist(neg) < 1e-2) continue;

    std::vector<double*> coords;
    for (Eigen::Index i = 0; i < table.entities.size(); ++i) coords.push_back(table.entities.data() + i);
    for (Eigen::Index i = 0; i < table.relations.size(); ++i) coords.push_back(table.relations.data() + i);

    Eigen::VectorXd analytic = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(coords.size()));
    const Eigen::Index d = 4;
    const Eigen::Index rel_offset = table.entities.size();
    for (const RowGradient& g : hinge_loss_gradient(table, pos, neg, margin)) {
      const Eigen::Index base = (g.is_entity ? 0 : rel_offset) + static_cast<Eigen::Index>(g.row) * d;
      analytic.segment(base, d) += g.value;
    }
    const Eigen::VectorXd numeric =
        central_difference(coords, [&] { return hinge_loss(table, pos, neg, margin); }, 1e-6);
    return relative_error(analytic, numeric);
  }
}

inline std::vector<double*> parameter_coords(PolicyParams& p) {
  std::vector<double*> coords;
  auto add = [&](auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) coords.push_back(m.data() + i);
  };
  add(p.w1); add(p.b1); add(p.w2); add(p.b2); add(p.w3); add(p.b3);
  return coords;
}

inline Eigen::VectorXd flatten(PolicyParams p) {
  const auto coords = parameter_coords(p);
  Eigen::VectorXd out(static_cast<Eigen::Index>(coords.size()));
  for (std::size_t i = 0; i < coords.size(); ++i) out(static_cast<Eigen::Index>(i)) = *coords[i];
  return out;
}

// reward * sum log pi over a random 3-step trajectory through a 6-5-7-4
// network with nonzero biases. States whose pre-activations sit near a ReLU
// kink are redrawn.
inline double reinforce_gradient_error(std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  PolicyParams params = init_policy(6, 5, 7, 4, rng());
  for (auto* b : {&params.b1, &params.b2, &params.b3}) {
    for (Eigen::Index i = 0; i < b->size(); ++i) (*b)(i) = 0.1 * normal(rng);
  }
  auto near_kink = [&](const Eigen::VectorXd& s) {
    const Eigen::VectorXd z1 = params.w1 * s + params.b1;
    const Eigen::VectorXd z2 = params.w2 * z1.cwiseMax(0.0) + params.b2;
    return z1.cwiseAbs().minCoeff() < 1e-3 || z2.cwiseAbs().minCoeff() < 1e-3;
  };
  Trajectory traj;
  std::uniform_int_distribution<RelationId> action(0, 3);
  while (traj.steps.size() < 3) {
    Eigen::VectorXd s(6);
    for (Eigen::Index i = 0; i < 6; ++i) s(i) = normal(rng);
    if (near_kink(s)) continue;
    traj.steps.push_back({s, action(rng)});
  }
  traj.reward = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);

  const Eigen::VectorXd analytic = flatten(reinforce_gradient(params, traj));
  auto objective = [&] {
    double sum = 0.0;
    for (const auto& st : traj.steps) sum += log_probability(params, st.state, st.action);
    return traj.reward * sum;
  };
  const Eigen::VectorXd numeric = central_difference(parameter_coords(params), objective, 1e-6);
  return relative_error(analytic, numeric);
}

}  // namespace kgpath::testing
