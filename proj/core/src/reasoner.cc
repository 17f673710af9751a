#include "kgpath/reasoner.h"

#include <Eigen/Cholesky>
#include <algorithm>
#include <sstream>
#include <iomanip>
#include <istream>
#include <iostream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "text_util.h"

namespace kgpath {
namespace {

using Frontier = std::vector<EntityId>;

// Entities reachable from `from` by one `relation` edge, sorted and unique.
Frontier expand(const KnowledgeGraph& kg, const Frontier& from, RelationId relation) {
  Frontier next;
  for (EntityId e : from) {
    const auto tails = kg.neighbors(e, relation);
    next.insert(next.end(), tails.begin(), tails.end());
  }
  std::sort(next.begin(), next.end());
  next.erase(std::unique(next.begin(), next.end()), next.end());
  return next;
}

bool intersects(const Frontier& a, const Frontier& b) {
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i == *j) return true;
    if (*i < *j) {
      ++i;
    } else {
      ++j;
    }
  }
  return false;
}

std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return s.str();
}

}  // namespace

VerifyResult bidirectional_verify(const KnowledgeGraph& kg, const PathFormula& formula,
                                  EntityPair pair, const VerifyOptions& options) {
  if (formula.empty()) throw std::invalid_argument("cannot verify an empty formula");
  if (!kg.inverse_closed()) {
    throw std::invalid_argument("bidirectional verification needs an inverse-closed graph");
  }
  if (!kg.valid_entity(pair.source) || !kg.valid_entity(pair.target)) {
    throw std::out_of_range("entity id out of range");
  }
  for (RelationId r : formula) {
    if (!kg.valid_relation(r)) throw std::out_of_range("formula relation out of range");
  }

  Frontier left{pair.source};
  Frontier right{pair.target};
  std::size_t start = 0;
  std::size_t end = formula.size();
  while (start < end) {
    const bool expand_left = left.size() < right.size() ||
                             (left.size() == right.size() && options.tie == TieRule::kExpandLeft);
    if (expand_left) {
      left = expand(kg, left, formula[start++]);
    } else {
      right = expand(kg, right, kg.inverse(formula[--end]));
    }
    if (left.empty() || right.empty()) return {};
    if (left.size() > options.frontier_cap || right.size() > options.frontier_cap) {
      return {false, true};
    }
  }
  return {intersects(left, right), false};
}

std::vector<double> FeatureMatrix::labels() const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(static_cast<double>(r.label));
  return out;
}

FeatureMatrix extract_features(const KnowledgeGraph& kg, std::span<const PathFormula> formulas,
                               std::span<const LabeledPair> rows,
                               const VerifyOptions& options) {
  if (formulas.empty()) throw std::invalid_argument("no formulas to build features from");
  FeatureMatrix fm;
  fm.formulas.assign(formulas.begin(), formulas.end());
  fm.rows.assign(rows.begin(), rows.end());
  fm.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()),
                                    static_cast<Eigen::Index>(formulas.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < formulas.size(); ++j) {
      const VerifyResult r = bidirectional_verify(kg, formulas[j], rows[i].pair, options);
      if (r.overflow) ++fm.overflows;
      fm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          r.connected ? 1.0 : 0.0;
    }
  }
  return fm;
}

RerankModel fit_rerank(const FeatureMatrix& features, std::span<const double> labels,
                       double l2) {
  const Eigen::Index n = features.values.rows();
  const Eigen::Index k = features.values.cols();
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw std::invalid_argument("label count does not match feature rows");
  }
  const bool has_pos = std::any_of(labels.begin(), labels.end(), [](double y) { return y > 0; });
  const bool has_neg = std::any_of(labels.begin(), labels.end(), [](double y) { return y < 0; });
  if (!has_pos || !has_neg) {
    throw std::invalid_argument("re-ranking needs both positive and negative rows");
  }
  if (l2 < 0.0) throw std::invalid_argument("l2 must be non-negative");

  const Eigen::Map<const Eigen::VectorXd> y(labels.data(), n);
  const double y_mean = y.mean();
  RerankModel model;
  model.weights = Eigen::VectorXd::Zero(k);

  // Centering removes the bias from the system; it is recovered afterwards.
  const Eigen::RowVectorXd x_mean = features.values.colwise().mean();
  const Eigen::MatrixXd xc = features.values.rowwise() - x_mean;
  if (xc.cwiseAbs().maxCoeff() == 0.0) {
    std::cerr << "warning: all feature rows identical; fitting bias only\n";
    model.bias = y_mean;
    model.bias_only = true;
    return model;
  }
  Eigen::MatrixXd gram = xc.transpose() * xc;
  gram.diagonal().array() += l2;
  const Eigen::VectorXd rhs = xc.transpose() * (y.array() - y_mean).matrix();
  model.weights = gram.ldlt().solve(rhs);
  model.bias = y_mean - x_mean.dot(model.weights);
  return model;
}

RerankModel fit_rerank(const FeatureMatrix& features, double l2) {
  const auto labels = features.labels();
  return fit_rerank(features, labels, l2);
}

std::vector<double> score_pairs(const RerankModel& model, const FeatureMatrix& features) {
  if (features.values.cols() != model.weights.size()) {
    throw std::invalid_argument("feature columns do not match the re-rank model");
  }
  const Eigen::VectorXd scores =
      (features.values * model.weights).array() + model.bias;
  return {scores.data(), scores.data() + scores.size()};
}

std::string format_formula(const KnowledgeGraph& kg, const PathFormula& formula) {
  std::string out;
  for (std::size_t i = 0; i < formula.size(); ++i) {
    if (i > 0) out += " -> ";
    out += kg.relation_name(formula[i]);
  }
  return out;
}

PathFormula parse_formula(const KnowledgeGraph& kg, std::string_view text) {
  PathFormula formula;
  for (std::string_view part : detail::split(detail::trim(text), std::string_view(" -> "))) {
    part = detail::trim(part);
    const auto r = kg.find_relation(part);
    if (!r) throw ParseError("unknown relation '" + std::string(part) + "'", 0);
    formula.push_back(*r);
  }
  return formula;
}

void write_formula_file(std::ostream& out, const KnowledgeGraph& kg,
                        std::span<const PathFormula> formulas) {
  for (const auto& f : formulas) out << format_formula(kg, f) << '\n';
}

std::vector<PathFormula> read_formula_file(std::istream& in, const KnowledgeGraph& kg) {
  std::vector<PathFormula> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty() || line.front() == '#') continue;
    try {
      out.push_back(parse_formula(kg, line));
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

void write_feature_matrix(std::ostream& out, const KnowledgeGraph& kg,
                          const FeatureMatrix& features) {
  for (std::size_t j = 0; j < features.formulas.size(); ++j) {
    if (j > 0) out << '\t';
    out << format_formula(kg, features.formulas[j]);
  }
  out << '\n';
  for (std::size_t i = 0; i < features.rows.size(); ++i) {
    const auto& row = features.rows[i];
    out << kg.entity_name(row.pair.source) << '\t' << kg.entity_name(row.pair.target) << '\t'
        << (row.label > 0 ? "+1" : "-1") << '\t';
    for (Eigen::Index j = 0; j < features.values.cols(); ++j) {
      if (j > 0) out << ',';
      out << (features.values(static_cast<Eigen::Index>(i), j) != 0.0 ? 1 : 0);
    }
    out << '\n';
  }
}

FeatureMatrix read_feature_matrix(std::istream& in, const KnowledgeGraph& kg) {
  FeatureMatrix fm;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty feature matrix", 0);
  for (std::string_view text : detail::split(line, '\t')) {
    fm.formulas.push_back(parse_formula(kg, text));
  }
  std::vector<std::vector<double>> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split(line, '\t');
    if (f.size() != 4) throw ParseError("expected 4 tab-separated fields", line_no);
    const auto s = kg.find_entity(f[0]);
    const auto t = kg.find_entity(f[1]);
    if (!s || !t) throw ParseError("unknown entity", line_no);
    if (f[2] != "+1" && f[2] != "-1") throw ParseError("label must be +1 or -1", line_no);
    fm.rows.push_back({{*s, *t}, f[2] == "+1" ? 1 : -1});
    std::vector<double> row;
    for (std::string_view v : detail::split(f[3], ',')) {
      if (v != "0" && v != "1") throw ParseError("feature values must be 0 or 1", line_no);
      row.push_back(v == "1" ? 1.0 : 0.0);
    }
    if (row.size() != fm.formulas.size()) throw ParseError("feature count mismatch", line_no);
    values.push_back(std::move(row));
  }
  fm.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(values.size()),
                                    static_cast<Eigen::Index>(fm.formulas.size()));
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (std::size_t j = 0; j < values[i].size(); ++j) {
      fm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i][j];
    }
  }
  return fm;
}

void save_rerank_model(std::ostream& out, const RerankModel& model) {
  out << "bias\t" << format_double(model.bias) << '\n';
  out << "bias_only\t" << (model.bias_only ? 1 : 0) << '\n';
  for (Eigen::Index i = 0; i < model.weights.size(); ++i) {
    out << "weight\t" << format_double(model.weights(i)) << '\n';
  }
}

RerankModel load_rerank_model(std::istream& in) {
  RerankModel model;
  std::vector<double> weights;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split(line, '\t');
    if (f.size() != 2) throw ParseError("expected key<TAB>value", line_no);
    if (f[0] == "bias_only") {
      model.bias_only = f[1] == "1";
      continue;
    }
    double value = 0.0;
    try {
      value = std::stod(std::string(f[1]));
    } catch (const std::exception&) {
      throw ParseError("bad number", line_no);
    }
    if (f[0] == "bias") {
      model.bias = value;
    } else if (f[0] == "weight") {
      weights.push_back(value);
    } else {
      throw ParseError("unknown key " + std::string(f[0]), line_no);
    }
  }
  model.weights = Eigen::Map<Eigen::VectorXd>(weights.data(), static_cast<Eigen::Index>(weights.size()));
  return model;
}

}  // namespace kgpath
