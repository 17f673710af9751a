#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace kgpath {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

// An ordered relation sequence r1 -> r2 -> ... -> rn used as a rule body.
// Relation ids may refer to inverse relations.
using PathFormula = std::vector<RelationId>;

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct EntityPair {
  EntityId source = 0;
  EntityId target = 0;

  friend auto operator<=>(const EntityPair&, const EntityPair&) = default;
};

// A candidate pair with label +1 (true fact) or -1 (corrupted).
struct LabeledPair {
  EntityPair pair;
  int label = 1;

  friend bool operator==(const LabeledPair&, const LabeledPair&) = default;
};

// Malformed input text; carries the offending 1-based line number (0 when
// the problem is not tied to a line).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line == 0 ? what
                                     : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A training computation produced NaN or infinity.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace kgpath
