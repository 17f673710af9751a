#include "kgpath/kg_store.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "text_util.h"

namespace kgpath {

KnowledgeGraph KnowledgeGraph::FromParts(std::vector<std::string> entity_names,
                                         std::vector<std::string> relation_names,
                                         std::vector<Triple> triples,
                                         bool inverse_closed) {
  KnowledgeGraph kg;
  kg.entity_names_ = std::move(entity_names);
  kg.relation_names_ = std::move(relation_names);
  kg.inverse_closed_ = inverse_closed;

  for (std::size_t i = 0; i < kg.entity_names_.size(); ++i) {
    if (!kg.entity_index_.emplace(kg.entity_names_[i], static_cast<EntityId>(i)).second) {
      throw std::invalid_argument("duplicate entity name: " + kg.entity_names_[i]);
    }
  }
  for (std::size_t i = 0; i < kg.relation_names_.size(); ++i) {
    if (!kg.relation_index_.emplace(kg.relation_names_[i], static_cast<RelationId>(i)).second) {
      throw std::invalid_argument("duplicate relation name: " + kg.relation_names_[i]);
    }
  }
  for (const Triple& t : triples) {
    if (!kg.valid_entity(t.head) || !kg.valid_entity(t.tail) ||
        !kg.valid_relation(t.relation)) {
      throw std::invalid_argument("triple references an unknown id");
    }
  }

  std::sort(triples.begin(), triples.end());
  triples.erase(std::unique(triples.begin(), triples.end()), triples.end());
  kg.triples_ = std::move(triples);
  kg.build_index();

  if (inverse_closed) {
    for (const Triple& t : kg.triples_) {
      if (!kg.has_edge(t.tail, kg.inverse(t.relation), t.head)) {
        throw std::invalid_argument("graph flagged inverse-closed but a mirror triple is missing");
      }
    }
  }
  return kg;
}

void KnowledgeGraph::build_index() {
  offsets_.assign(entity_count() + 1, 0);
  edge_relations_.resize(triples_.size());
  edge_tails_.resize(triples_.size());
  for (const Triple& t : triples_) ++offsets_[t.head + 1];
  for (std::size_t e = 0; e < entity_count(); ++e) offsets_[e + 1] += offsets_[e];
  // triples_ is sorted by head first, so position i is already in CSR order.
  for (std::size_t i = 0; i < triples_.size(); ++i) {
    edge_relations_[i] = triples_[i].relation;
    edge_tails_[i] = triples_[i].tail;
  }
}

RelationId KnowledgeGraph::inverse(RelationId r) const {
  const auto n = static_cast<RelationId>(base_relation_count());
  if (r >= 2 * n) throw std::out_of_range("relation id out of range");
  return r < n ? r + n : r - n;
}

const std::string& KnowledgeGraph::entity_name(EntityId e) const {
  if (!valid_entity(e)) throw std::out_of_range("entity id out of range");
  return entity_names_[e];
}

std::string KnowledgeGraph::relation_name(RelationId r) const {
  if (!valid_relation(r)) throw std::out_of_range("relation id out of range");
  if (is_inverse(r)) return relation_names_[inverse(r)] + std::string(kInverseSuffix);
  return relation_names_[r];
}

std::optional<EntityId> KnowledgeGraph::find_entity(std::string_view name) const {
  auto it = entity_index_.find(std::string(name));
  if (it == entity_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationId> KnowledgeGraph::find_relation(std::string_view name) const {
  if (auto it = relation_index_.find(std::string(name)); it != relation_index_.end()) {
    return it->second;
  }
  if (inverse_closed_ && name.ends_with(kInverseSuffix)) {
    name.remove_suffix(kInverseSuffix.size());
    if (auto it = relation_index_.find(std::string(name)); it != relation_index_.end()) {
      return inverse(it->second);
    }
  }
  return std::nullopt;
}

std::span<const EntityId> KnowledgeGraph::neighbors(EntityId e, RelationId r) const {
  if (!valid_entity(e)) throw std::out_of_range("entity id out of range");
  if (!valid_relation(r)) throw std::out_of_range("relation id out of range");
  const auto first = edge_relations_.begin() + static_cast<std::ptrdiff_t>(offsets_[e]);
  const auto last = edge_relations_.begin() + static_cast<std::ptrdiff_t>(offsets_[e + 1]);
  const auto [lo, hi] = std::equal_range(first, last, r);
  const auto begin = static_cast<std::size_t>(lo - edge_relations_.begin());
  return {edge_tails_.data() + begin, static_cast<std::size_t>(hi - lo)};
}

KnowledgeGraph::OutEdges KnowledgeGraph::out_edges(EntityId e) const {
  if (!valid_entity(e)) throw std::out_of_range("entity id out of range");
  const std::size_t begin = offsets_[e];
  const std::size_t count = offsets_[e + 1] - begin;
  return {{edge_relations_.data() + begin, count}, {edge_tails_.data() + begin, count}};
}

bool KnowledgeGraph::has_edge(EntityId head, RelationId relation, EntityId tail) const {
  if (!valid_entity(head) || !valid_entity(tail) || !valid_relation(relation)) return false;
  const auto tails = neighbors(head, relation);
  return std::binary_search(tails.begin(), tails.end(), tail);
}

namespace {

class GraphBuilder {
 public:
  void add(std::string_view head, std::string_view relation, std::string_view tail) {
    const EntityId h = intern(entities_, entity_ids_, head);
    const RelationId r = intern(relations_, relation_ids_, relation);
    const EntityId t = intern(entities_, entity_ids_, tail);
    triples_.push_back({h, r, t});
  }

  bool empty() const { return triples_.empty(); }

  KnowledgeGraph build() && {
    return KnowledgeGraph::FromParts(std::move(entities_), std::move(relations_),
                                     std::move(triples_), false);
  }

 private:
  static std::uint32_t intern(std::vector<std::string>& names,
                              std::unordered_map<std::string, std::uint32_t>& ids,
                              std::string_view name) {
    auto [it, inserted] =
        ids.emplace(std::string(name), static_cast<std::uint32_t>(names.size()));
    if (inserted) names.emplace_back(name);
    return it->second;
  }

  std::vector<std::string> entities_;
  std::unordered_map<std::string, std::uint32_t> entity_ids_;
  std::vector<std::string> relations_;
  std::unordered_map<std::string, std::uint32_t> relation_ids_;
  std::vector<Triple> triples_;
};

}  // namespace

KnowledgeGraph parse_triples(std::istream& in) {
  GraphBuilder builder;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split(line, '\t');
    if (fields.size() != 3) {
      throw ParseError("expected 3 tab-separated fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    }
    for (const auto& f : fields) {
      if (f.empty()) throw ParseError("empty field", line_no);
    }
    builder.add(fields[0], fields[1], fields[2]);
  }
  if (builder.empty()) throw ParseError("no triples in input", 0);
  return std::move(builder).build();
}

KnowledgeGraph graph_from_named(std::span<const NamedTriple> triples) {
  GraphBuilder builder;
  for (const auto& t : triples) builder.add(t.head, t.relation, t.tail);
  return std::move(builder).build();
}

KnowledgeGraph load_triples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open triple file: " + path.string());
  return parse_triples(in);
}

void write_triples(std::ostream& out, std::span<const NamedTriple> triples) {
  for (const auto& t : triples) out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
}

KnowledgeGraph augment_inverses(const KnowledgeGraph& kg) {
  if (kg.inverse_closed()) throw std::logic_error("graph is already inverse-closed");
  const auto n = static_cast<RelationId>(kg.base_relation_count());
  std::vector<Triple> triples = kg.triples();
  triples.reserve(2 * triples.size());
  for (const Triple& t : kg.triples()) triples.push_back({t.tail, t.relation + n, t.head});
  return KnowledgeGraph::FromParts(kg.entity_names(), kg.relation_names(),
                                   std::move(triples), true);
}

std::vector<LabeledPair> TaskSplit::train_rows() const {
  std::vector<LabeledPair> rows;
  rows.reserve(train_positives.size() + train_negatives.size());
  for (const auto& p : train_positives) rows.push_back({p, +1});
  for (const auto& p : train_negatives) rows.push_back({p, -1});
  return rows;
}

std::vector<LabeledPair> TaskSplit::test_rows() const {
  std::vector<LabeledPair> rows;
  rows.reserve(test_positives.size() + test_negatives.size());
  for (const auto& p : test_positives) rows.push_back({p, +1});
  for (const auto& p : test_negatives) rows.push_back({p, -1});
  return rows;
}

namespace {

// Up to `count` corruptions (head, t') per positive, t' from `pool`, never a
// true triple and never repeated for the same head.
std::vector<EntityPair> corrupt_tails(const KnowledgeGraph& kg, RelationId relation,
                                      std::span<const EntityPair> positives,
                                      std::span<const EntityId> pool, std::size_t count,
                                      std::mt19937_64& rng, bool& short_flag) {
  std::vector<EntityPair> negatives;
  std::set<EntityPair> used;
  std::vector<EntityId> candidates;
  for (const EntityPair& p : positives) {
    candidates.clear();
    for (EntityId t : pool) {
      if (t == p.target || kg.has_edge(p.source, relation, t)) continue;
      if (used.contains({p.source, t})) continue;
      candidates.push_back(t);
    }
    const std::size_t take = std::min(count, candidates.size());
    if (take < count) short_flag = true;
    // Partial Fisher-Yates: the first `take` slots become a uniform sample.
    for (std::size_t i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
      std::swap(candidates[i], candidates[pick(rng)]);
      negatives.push_back({p.source, candidates[i]});
      used.insert({p.source, candidates[i]});
    }
  }
  return negatives;
}

}  // namespace

TaskSplitResult make_task_split(const KnowledgeGraph& kg, RelationId relation,
                                double train_fraction,
                                std::size_t negatives_per_positive,
                                std::uint64_t seed) {
  if (!kg.valid_relation(relation)) throw std::out_of_range("relation id out of range");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("train_fraction must lie in (0, 1)");
  }
  const RelationId base = kg.base_relation(relation);

  std::vector<EntityPair> positives;
  std::vector<EntityId> pool;
  std::vector<Triple> kept;
  kept.reserve(kg.triple_count());
  for (const Triple& t : kg.triples()) {
    if (t.relation == base) {
      positives.push_back({t.head, t.tail});
      pool.push_back(t.tail);
    } else if (!(kg.inverse_closed() && t.relation == kg.inverse(base))) {
      kept.push_back(t);
    }
  }
  if (positives.size() < 2) {
    throw std::invalid_argument("relation " + kg.relation_name(base) +
                                " has fewer than 2 triples");
  }
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());

  std::mt19937_64 rng(seed);
  std::shuffle(positives.begin(), positives.end(), rng);
  const auto n = static_cast<double>(positives.size());
  const auto n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(train_fraction * n)), 1, positives.size() - 1);

  TaskSplit split;
  split.relation = base;
  split.train_positives.assign(positives.begin(),
                               positives.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test_positives.assign(positives.begin() + static_cast<std::ptrdiff_t>(n_train),
                              positives.end());
  split.train_negatives = corrupt_tails(kg, base, split.train_positives, pool,
                                        negatives_per_positive, rng, split.negatives_short);
  split.test_negatives = corrupt_tails(kg, base, split.test_positives, pool,
                                       negatives_per_positive, rng, split.negatives_short);

  return {KnowledgeGraph::FromParts(kg.entity_names(), kg.relation_names(),
                                    std::move(kept), kg.inverse_closed()),
          std::move(split)};
}

void save_graph(std::ostream& out, const KnowledgeGraph& kg) {
  out << "kgpath-graph\t1\n";
  out << "inverse_closed\t" << (kg.inverse_closed() ? 1 : 0) << '\n';
  out << "entities\t" << kg.entity_count() << '\n';
  for (const auto& name : kg.entity_names()) out << name << '\n';
  out << "relations\t" << kg.base_relation_count() << '\n';
  for (const auto& name : kg.relation_names()) out << name << '\n';
  out << "triples\t" << kg.triple_count() << '\n';
  for (const Triple& t : kg.triples()) {
    out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
  }
}

namespace {

std::size_t read_count_line(std::istream& in, std::string_view key, std::size_t& line_no) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("unexpected end of input", line_no + 1);
  ++line_no;
  const auto fields = detail::split(line, '\t');
  if (fields.size() != 2 || fields[0] != key) {
    throw ParseError("expected '" + std::string(key) + "' header", line_no);
  }
  return detail::parse_unsigned(fields[1], line_no);
}

}  // namespace

KnowledgeGraph load_graph(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line) || line != "kgpath-graph\t1") {
    throw ParseError("not a kgpath graph file", 1);
  }
  ++line_no;
  const bool closed = read_count_line(in, "inverse_closed", line_no) != 0;

  auto read_names = [&](std::string_view key) {
    const std::size_t count = read_count_line(in, key, line_no);
    std::vector<std::string> names(count);
    for (auto& name : names) {
      if (!std::getline(in, name)) throw ParseError("truncated name list", line_no + 1);
      ++line_no;
    }
    return names;
  };
  auto entities = read_names("entities");
  auto relations = read_names("relations");

  const std::size_t count = read_count_line(in, "triples", line_no);
  std::vector<Triple> triples;
  triples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw ParseError("truncated triple list", line_no + 1);
    ++line_no;
    const auto f = detail::split(line, '\t');
    if (f.size() != 3) throw ParseError("expected 3 fields", line_no);
    triples.push_back({static_cast<EntityId>(detail::parse_unsigned(f[0], line_no)),
                       static_cast<RelationId>(detail::parse_unsigned(f[1], line_no)),
                       static_cast<EntityId>(detail::parse_unsigned(f[2], line_no))});
  }
  return KnowledgeGraph::FromParts(std::move(entities), std::move(relations),
                                   std::move(triples), closed);
}

void write_split_manifest(std::ostream& out, const KnowledgeGraph& kg,
                          const TaskSplit& split) {
  out << "relation\t" << kg.relation_name(split.relation) << '\n';
  out << "negatives_short\t" << (split.negatives_short ? 1 : 0) << '\n';
  auto rows = [&](std::span<const EntityPair> pairs, const char* label) {
    for (const auto& p : pairs) {
      out << kg.entity_name(p.source) << '\t' << kg.entity_name(p.target) << '\t' << label
          << '\n';
    }
  };
  out << "[train]\n";
  rows(split.train_positives, "+1");
  rows(split.train_negatives, "-1");
  out << "[test]\n";
  rows(split.test_positives, "+1");
  rows(split.test_negatives, "-1");
}

TaskSplit read_split_manifest(std::istream& in, const KnowledgeGraph& kg) {
  TaskSplit split;
  std::string line;
  std::size_t line_no = 0;
  bool have_relation = false;
  enum class Section { kNone, kTrain, kTest } section = Section::kNone;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line == "[train]") {
      section = Section::kTrain;
      continue;
    }
    if (line == "[test]") {
      section = Section::kTest;
      continue;
    }
    const auto f = detail::split(line, '\t');
    if (section == Section::kNone) {
      if (f.size() == 2 && f[0] == "relation") {
        const auto r = kg.find_relation(f[1]);
        if (!r) throw ParseError("unknown relation " + std::string(f[1]), line_no);
        split.relation = kg.base_relation(*r);
        have_relation = true;
      } else if (f.size() == 2 && f[0] == "negatives_short") {
        split.negatives_short = f[1] == "1";
      } else {
        throw ParseError("unexpected manifest header line", line_no);
      }
      continue;
    }
    if (f.size() != 3) throw ParseError("expected head<TAB>tail<TAB>label", line_no);
    const auto h = kg.find_entity(f[0]);
    const auto t = kg.find_entity(f[1]);
    if (!h || !t) throw ParseError("unknown entity", line_no);
    int label = 0;
    if (f[2] == "+1" || f[2] == "1") {
      label = 1;
    } else if (f[2] == "-1") {
      label = -1;
    } else {
      throw ParseError("label must be +1 or -1", line_no);
    }
    const EntityPair pair{*h, *t};
    if (section == Section::kTrain) {
      (label > 0 ? split.train_positives : split.train_negatives).push_back(pair);
    } else {
      (label > 0 ? split.test_positives : split.test_negatives).push_back(pair);
    }
  }
  if (!have_relation) throw ParseError("manifest has no relation line", 0);
  return split;
}

}  // namespace kgpath
