#pragma once

// Translation-based entity/relation embeddings (head + relation ~ tail) and
// the state vectors the policy consumes.

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "kgpath/kg_store.h"
#include "kgpath/types.h"

namespace kgpath {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// (e_current, e_target - e_current), length 2d.
using StateVector = Eigen::VectorXd;

struct EmbeddingTable {
  RowMatrix entities;   // |E| x d
  RowMatrix relations;  // |R| x d, inverse relations included

  std::size_t dim() const { return static_cast<std::size_t>(entities.cols()); }
  std::size_t entity_count() const { return static_cast<std::size_t>(entities.rows()); }
  std::size_t relation_count() const { return static_cast<std::size_t>(relations.rows()); }

  friend bool operator==(const EmbeddingTable& a, const EmbeddingTable& b) {
    return a.entities.rows() == b.entities.rows() && a.entities.cols() == b.entities.cols() &&
           a.relations.rows() == b.relations.rows() &&
           a.relations.cols() == b.relations.cols() && a.entities == b.entities &&
           a.relations == b.relations;
  }
};

struct EmbeddingConfig {
  std::size_t dim = 100;
  double margin = 1.0;
  std::size_t epochs = 1000;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
};

// Seeded uniform(-6/sqrt(d), 6/sqrt(d)) initialization with relation rows
// normalized to unit length and entity rows projected into the unit ball.
EmbeddingTable init_embedding(std::size_t entity_count, std::size_t relation_count,
                              std::size_t dim, std::uint64_t seed);

// Margin loss max(0, margin + |h + r - t| - |h' + r - t'|) under the L2 norm.
double hinge_loss(const EmbeddingTable& table, const Triple& positive,
                  const Triple& corrupted, double margin);

// Gradient of hinge_loss with respect to the rows it touches. A row may be
// listed more than once (e.g. when the corruption keeps the head); callers
// accumulate. Empty when the hinge is inactive.
struct RowGradient {
  bool is_entity = true;
  std::size_t row = 0;
  Vector value;
};
std::vector<RowGradient> hinge_loss_gradient(const EmbeddingTable& table,
                                             const Triple& positive,
                                             const Triple& corrupted, double margin);

// SGD over the graph's triples. Each epoch visits triples in a seeded
// shuffled order, corrupts head or tail (probability 1/2 each) with a
// uniformly drawn entity, steps on the hinge loss, and finally projects
// every entity row back into the unit ball. `on_epoch` receives the
// 1-based epoch and that epoch's mean loss. Throws NumericError on a
// non-finite loss and std::invalid_argument on an empty graph, dim < 2 or
// margin <= 0.
EmbeddingTable train_translation_embedding(
    const KnowledgeGraph& kg, const EmbeddingConfig& config,
    const std::function<void(std::size_t, double)>& on_epoch = {});

StateVector embed_state(const EmbeddingTable& table, EntityId current, EntityId target);

// Sum of the relation vectors along the path. Throws on an empty path.
Vector path_embedding(const EmbeddingTable& table, const PathFormula& path);

// Binary checkpoint: 8-byte magic, then d, |E|, |R| as little-endian u64,
// then entity rows and relation rows as little-endian f64.
void save_embedding(std::ostream& out, const EmbeddingTable& table);
EmbeddingTable load_embedding(std::istream& in);

// Sidecar mapping names to row indices: "entity<TAB>row<TAB>name" and
// "relation<TAB>row<TAB>name" lines.
void write_embedding_names(std::ostream& out, const KnowledgeGraph& kg);

}  // namespace kgpath
