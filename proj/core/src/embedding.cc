#include "kgpath/embedding.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "binary_io.h"
#include "kgpath/rng.h"

namespace kgpath {
namespace {

constexpr std::string_view kEmbeddingMagic = "KGPEMB01";

void check_entity(const EmbeddingTable& table, EntityId e) {
  if (e >= table.entity_count()) throw std::out_of_range("entity id out of range");
}

void check_relation(const EmbeddingTable& table, RelationId r) {
  if (r >= table.relation_count()) throw std::out_of_range("relation id out of range");
}

void project_to_unit_ball(RowMatrix& rows) {
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const double norm = rows.row(i).norm();
    if (norm > 1.0) rows.row(i) /= norm;
  }
}

// Unit vector along x, or zero where the norm has no gradient.
Vector unit(const Vector& x, double norm) {
  return norm > 0.0 ? Vector(x / norm) : Vector(Vector::Zero(x.size()));
}

}  // namespace

EmbeddingTable init_embedding(std::size_t entity_count, std::size_t relation_count,
                              std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  const double bound = 6.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  EmbeddingTable table{RowMatrix(entity_count, dim), RowMatrix(relation_count, dim)};
  for (Eigen::Index i = 0; i < table.entities.size(); ++i) table.entities.data()[i] = uniform(rng);
  for (Eigen::Index i = 0; i < table.relations.size(); ++i) table.relations.data()[i] = uniform(rng);
  for (Eigen::Index i = 0; i < table.relations.rows(); ++i) {
    const double norm = table.relations.row(i).norm();
    if (norm > 0.0) table.relations.row(i) /= norm;
  }
  project_to_unit_ball(table.entities);
  return table;
}

double hinge_loss(const EmbeddingTable& table, const Triple& positive,
                  const Triple& corrupted, double margin) {
  const Vector x = table.entities.row(positive.head) + table.relations.row(positive.relation) -
                   table.entities.row(positive.tail);
  const Vector y = table.entities.row(corrupted.head) +
                   table.relations.row(corrupted.relation) -
                   table.entities.row(corrupted.tail);
  return std::max(0.0, margin + x.norm() - y.norm());
}

std::vector<RowGradient> hinge_loss_gradient(const EmbeddingTable& table,
                                             const Triple& positive,
                                             const Triple& corrupted, double margin) {
  const Vector x = table.entities.row(positive.head) + table.relations.row(positive.relation) -
                   table.entities.row(positive.tail);
  const Vector y = table.entities.row(corrupted.head) +
                   table.relations.row(corrupted.relation) -
                   table.entities.row(corrupted.tail);
  const double dp = x.norm();
  const double dn = y.norm();
  if (margin + dp - dn <= 0.0) return {};
  const Vector gp = unit(x, dp);
  const Vector gn = unit(y, dn);
  return {
      {true, positive.head, gp},
      {false, positive.relation, gp},
      {true, positive.tail, -gp},
      {true, corrupted.head, -gn},
      {false, corrupted.relation, -gn},
      {true, corrupted.tail, gn},
  };
}

EmbeddingTable train_translation_embedding(
    const KnowledgeGraph& kg, const EmbeddingConfig& config,
    const std::function<void(std::size_t, double)>& on_epoch) {
  if (kg.triple_count() == 0) throw std::invalid_argument("cannot embed an empty graph");
  if (config.dim < 2) throw std::invalid_argument("embedding dimension must be >= 2");
  if (!(config.margin > 0.0)) throw std::invalid_argument("margin must be positive");

  EmbeddingTable table =
      init_embedding(kg.entity_count(), kg.relation_count(), config.dim, config.seed);
  Rng rng(derive_seed(config.seed, 1));
  std::uniform_int_distribution<EntityId> any_entity(
      0, static_cast<EntityId>(kg.entity_count() - 1));
  std::bernoulli_distribution corrupt_head(0.5);

  const auto& triples = kg.triples();
  std::vector<std::size_t> order(triples.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t idx : order) {
      const Triple& pos = triples[idx];
      Triple neg = pos;
      const bool head = corrupt_head(rng);
      EntityId& slot = head ? neg.head : neg.tail;
      const EntityId original = slot;
      do {
        slot = any_entity(rng);
      } while (slot == original && kg.entity_count() > 1);

      const double loss = hinge_loss(table, pos, neg, config.margin);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite embedding loss at epoch " + std::to_string(epoch));
      }
      total += loss;
      if (loss <= 0.0) continue;
      // Gradients are evaluated before any row moves.
      for (const RowGradient& g : hinge_loss_gradient(table, pos, neg, config.margin)) {
        auto& rows = g.is_entity ? table.entities : table.relations;
        rows.row(static_cast<Eigen::Index>(g.row)) -= config.learning_rate * g.value.transpose();
      }
    }
    project_to_unit_ball(table.entities);
    const double mean = total / static_cast<double>(triples.size());
    if (!std::isfinite(mean)) {
      throw NumericError("non-finite embedding loss at epoch " + std::to_string(epoch));
    }
    if (on_epoch) on_epoch(epoch, mean);
  }
  return table;
}

StateVector embed_state(const EmbeddingTable& table, EntityId current, EntityId target) {
  check_entity(table, current);
  check_entity(table, target);
  const auto d = static_cast<Eigen::Index>(table.dim());
  StateVector s(2 * d);
  s.head(d) = table.entities.row(current).transpose();
  s.tail(d) = (table.entities.row(target) - table.entities.row(current)).transpose();
  return s;
}

Vector path_embedding(const EmbeddingTable& table, const PathFormula& path) {
  if (path.empty()) throw std::invalid_argument("path embedding of an empty path");
  Vector p = Vector::Zero(static_cast<Eigen::Index>(table.dim()));
  for (RelationId r : path) {
    check_relation(table, r);
    p += table.relations.row(r).transpose();
  }
  return p;
}

void save_embedding(std::ostream& out, const EmbeddingTable& table) {
  detail::write_magic(out, kEmbeddingMagic);
  detail::write_u64(out, table.dim());
  detail::write_u64(out, table.entity_count());
  detail::write_u64(out, table.relation_count());
  detail::write_matrix(out, table.entities);
  detail::write_matrix(out, table.relations);
}

EmbeddingTable load_embedding(std::istream& in) {
  detail::expect_magic(in, kEmbeddingMagic);
  const auto dim = static_cast<Eigen::Index>(detail::read_u64(in));
  const auto entities = static_cast<Eigen::Index>(detail::read_u64(in));
  const auto relations = static_cast<Eigen::Index>(detail::read_u64(in));
  EmbeddingTable table{RowMatrix(entities, dim), RowMatrix(relations, dim)};
  detail::read_matrix(in, table.entities);
  detail::read_matrix(in, table.relations);
  return table;
}

void write_embedding_names(std::ostream& out, const KnowledgeGraph& kg) {
  for (EntityId e = 0; e < kg.entity_count(); ++e) {
    out << "entity\t" << e << '\t' << kg.entity_name(e) << '\n';
  }
  for (RelationId r = 0; r < kg.relation_count(); ++r) {
    out << "relation\t" << r << '\t' << kg.relation_name(r) << '\n';
  }
}

}  // namespace kgpath
