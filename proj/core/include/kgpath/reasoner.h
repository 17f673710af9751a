#pragma once

// Path formulas as rules: bidirectional verification, binary path features
// and a ridge-regression re-ranker over them.

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgpath/kg_store.h"
#include "kgpath/types.h"

namespace kgpath {

enum class TieRule { kExpandLeft, kExpandRight };

struct VerifyOptions {
  std::size_t frontier_cap = 1'000'000;
  TieRule tie = TieRule::kExpandLeft;
};

struct VerifyResult {
  bool connected = false;
  bool overflow = false;  // a frontier exceeded the cap; connected is false

  explicit operator bool() const { return connected; }
};

// Checks whether `formula` links pair.source to pair.target. A left frontier
// grows from the source along the formula's leading relations and a right
// frontier grows from the target along the inverses of its trailing
// relations, always expanding the smaller one, until every relation is
// consumed; the pair is connected iff the frontiers meet. Requires an
// inverse-closed graph.
VerifyResult bidirectional_verify(const KnowledgeGraph& kg, const PathFormula& formula,
                                  EntityPair pair, const VerifyOptions& options = {});

struct FeatureMatrix {
  std::vector<PathFormula> formulas;  // columns
  std::vector<LabeledPair> rows;
  Eigen::MatrixXd values;  // rows x formulas, entries 0 or 1
  std::size_t overflows = 0;

  std::vector<double> labels() const;
};

// Throws std::invalid_argument when `formulas` is empty.
FeatureMatrix extract_features(const KnowledgeGraph& kg, std::span<const PathFormula> formulas,
                               std::span<const LabeledPair> rows,
                               const VerifyOptions& options = {});

struct RerankModel {
  Eigen::VectorXd weights;
  double bias = 0.0;
  // Set when every feature row was identical and only the bias was fitted.
  bool bias_only = false;
};

// Least squares on the +-1 labels with an unpenalized bias and ridge
// penalty l2 on the weights. Throws std::invalid_argument without at least
// one positive and one negative label, or on a label count mismatch.
RerankModel fit_rerank(const FeatureMatrix& features, std::span<const double> labels,
                       double l2);
RerankModel fit_rerank(const FeatureMatrix& features, double l2);

// bias + weights . row for every row. Throws std::invalid_argument when the
// column count differs from the model.
std::vector<double> score_pairs(const RerankModel& model, const FeatureMatrix& features);

// "r1 -> r2_inv -> r3" style text.
std::string format_formula(const KnowledgeGraph& kg, const PathFormula& formula);
PathFormula parse_formula(const KnowledgeGraph& kg, std::string_view text);

void write_formula_file(std::ostream& out, const KnowledgeGraph& kg,
                        std::span<const PathFormula> formulas);
std::vector<PathFormula> read_formula_file(std::istream& in, const KnowledgeGraph& kg);

// Header of tab-separated formula strings, then
// "source<TAB>target<TAB>label<TAB>f1,...,fk" per row.
void write_feature_matrix(std::ostream& out, const KnowledgeGraph& kg,
                          const FeatureMatrix& features);
FeatureMatrix read_feature_matrix(std::istream& in, const KnowledgeGraph& kg);

// "bias<TAB>value" then one "weight<TAB>value" line per formula; values are
// written with round-trip precision.
void save_rerank_model(std::ostream& out, const RerankModel& model);
RerankModel load_rerank_model(std::istream& in);

}  // namespace kgpath
