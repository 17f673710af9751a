#pragma once

// Integer-id triple store with per-(entity, relation) adjacency.
//
// Ids are dense and assigned in first-seen order. When the graph is
// inverse-closed every base relation r in [0, |R|) has an inverse with id
// r + |R|, and (h, r, t) is stored iff (t, inv(r), h) is stored.
//
// Adjacency is a CSR layout over triples sorted by (head, relation, tail):
// the edges of entity e occupy [offsets_[e], offsets_[e + 1]) of the
// parallel arrays edge_relations_ / edge_tails_, so neighbors(e, r) is a
// contiguous, ascending run of tails.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kgpath/types.h"

namespace kgpath {

// Suffix appended to a base relation name to name its inverse.
inline constexpr std::string_view kInverseSuffix = "_inv";

class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  // Builds a graph from dictionaries and triples. Duplicate triples are
  // collapsed. `relation_names` holds base relations only. Throws
  // std::invalid_argument on out-of-range ids, duplicate names, or (when
  // inverse_closed) a triple whose mirror is missing.
  static KnowledgeGraph FromParts(std::vector<std::string> entity_names,
                                  std::vector<std::string> relation_names,
                                  std::vector<Triple> triples,
                                  bool inverse_closed);

  std::size_t entity_count() const { return entity_names_.size(); }
  // Size of the action space: 2|R| once inverse-closed, |R| before.
  std::size_t relation_count() const {
    return inverse_closed_ ? 2 * relation_names_.size() : relation_names_.size();
  }
  std::size_t base_relation_count() const { return relation_names_.size(); }
  std::size_t triple_count() const { return triples_.size(); }
  bool inverse_closed() const { return inverse_closed_; }

  bool valid_entity(EntityId e) const { return e < entity_count(); }
  bool valid_relation(RelationId r) const { return r < relation_count(); }

  // Offset-scheme inverse; inverse(inverse(r)) == r.
  RelationId inverse(RelationId r) const;
  bool is_inverse(RelationId r) const { return r >= base_relation_count(); }
  RelationId base_relation(RelationId r) const {
    return is_inverse(r) ? inverse(r) : r;
  }

  const std::string& entity_name(EntityId e) const;
  std::string relation_name(RelationId r) const;
  std::optional<EntityId> find_entity(std::string_view name) const;
  // Accepts base names and base names carrying kInverseSuffix (the latter
  // only on inverse-closed graphs).
  std::optional<RelationId> find_relation(std::string_view name) const;

  const std::vector<std::string>& entity_names() const { return entity_names_; }
  const std::vector<std::string>& relation_names() const { return relation_names_; }

  // Tails of (e, r, .) in ascending id order. Throws std::out_of_range on
  // invalid ids.
  std::span<const EntityId> neighbors(EntityId e, RelationId r) const;

  // All outgoing edges of e, sorted by (relation, tail).
  struct OutEdges {
    std::span<const RelationId> relations;
    std::span<const EntityId> tails;
    std::size_t size() const { return tails.size(); }
  };
  OutEdges out_edges(EntityId e) const;

  bool has_edge(EntityId head, RelationId relation, EntityId tail) const;

  // Every stored triple, sorted by (head, relation, tail).
  const std::vector<Triple>& triples() const { return triples_; }

  friend bool operator==(const KnowledgeGraph& a, const KnowledgeGraph& b) {
    return a.inverse_closed_ == b.inverse_closed_ &&
           a.entity_names_ == b.entity_names_ &&
           a.relation_names_ == b.relation_names_ && a.triples_ == b.triples_;
  }

 private:
  void build_index();

  std::vector<std::string> entity_names_;
  std::unordered_map<std::string, EntityId> entity_index_;
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, RelationId> relation_index_;
  bool inverse_closed_ = false;

  std::vector<Triple> triples_;
  std::vector<std::size_t> offsets_;
  std::vector<RelationId> edge_relations_;
  std::vector<EntityId> edge_tails_;
};

// Reads head<TAB>relation<TAB>tail lines. Blank lines are skipped and a
// trailing CR is tolerated. Throws ParseError with the line number on a
// wrong field count and ParseError when no triple is present.
KnowledgeGraph parse_triples(std::istream& in);
KnowledgeGraph load_triples(const std::filesystem::path& path);

// Writes named triples in the same format parse_triples reads.
struct NamedTriple {
  std::string head;
  std::string relation;
  std::string tail;
};
void write_triples(std::ostream& out, std::span<const NamedTriple> triples);

// Builds a (not inverse-closed) graph assigning ids in first-seen order,
// exactly as parse_triples would for the same lines.
KnowledgeGraph graph_from_named(std::span<const NamedTriple> triples);

// Adds (t, inv(r), h) for every (h, r, t). Throws std::logic_error when the
// graph is already inverse-closed.
KnowledgeGraph augment_inverses(const KnowledgeGraph& kg);

struct TaskSplit {
  RelationId relation = 0;
  std::vector<EntityPair> train_positives;
  std::vector<EntityPair> train_negatives;
  std::vector<EntityPair> test_positives;
  // Each negative corrupts the tail of a test query; its source is the
  // query head it belongs to.
  std::vector<EntityPair> test_negatives;
  // Set when some positive received fewer corruptions than requested.
  bool negatives_short = false;

  std::vector<LabeledPair> train_rows() const;
  std::vector<LabeledPair> test_rows() const;

  friend bool operator==(const TaskSplit&, const TaskSplit&) = default;
};

struct TaskSplitResult {
  KnowledgeGraph graph;  // r and inv(r) removed
  TaskSplit split;
};

// Removes every (h, r, t) and its inverse, shuffles the removed pairs with
// `seed`, and splits them train/test. Each positive gets up to
// `negatives_per_positive` tail corruptions drawn from the observed tails
// of r, never coinciding with a true triple. Throws std::invalid_argument
// when r has fewer than two triples or train_fraction is outside (0, 1).
TaskSplitResult make_task_split(const KnowledgeGraph& kg, RelationId relation,
                                double train_fraction,
                                std::size_t negatives_per_positive,
                                std::uint64_t seed);

// Text serialization preserving dictionaries, triples and closure flag.
void save_graph(std::ostream& out, const KnowledgeGraph& kg);
KnowledgeGraph load_graph(std::istream& in);

// Manifest: "relation<TAB>name", then "[train]" and "[test]" sections of
// head<TAB>tail<TAB>label lines with label "+1" or "-1".
void write_split_manifest(std::ostream& out, const KnowledgeGraph& kg,
                          const TaskSplit& split);
TaskSplit read_split_manifest(std::istream& in, const KnowledgeGraph& kg);

}  // namespace kgpath
