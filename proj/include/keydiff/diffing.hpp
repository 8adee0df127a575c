#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "keydiff/expr.hpp"
#include "keydiff/keyexpr.hpp"
#include "keydiff/keygraph.hpp"

namespace keydiff {

/// Operand and operator atoms of an expression, each wrapped in the
/// brackets and parentheses that enclose it. `+` and separators are
/// dropped; numbers are decimal.
std::vector<std::string> tokenize_expr(const SymExpr& e);

/// Kind-prefixed tokens of one key expression, `WHILE` first if marked.
std::vector<std::string> tokenize(const KeyExpr& key, bool while_marker = false);

/// Concatenated tokens of a serialized graph.
std::vector<std::string> tokenize_sequence(const std::vector<KeyNode>& nodes);

struct MinHashParams {
  std::uint32_t k = 128;
  std::uint32_t w = 1;
  std::uint64_t seed = 0;

  friend bool operator==(const MinHashParams&, const MinHashParams&) = default;
};

struct MinHashSignature {
  MinHashParams params;
  std::vector<std::uint64_t> slots;
  bool empty = false;

  friend bool operator==(const MinHashSignature&, const MinHashSignature&) = default;
};

class ParamsMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Per-slot minimum of a seeded 64-bit hash over the set of w-gram
/// shingles. An empty shingle set gives all slots at the maximum value and
/// the empty flag.
MinHashSignature signature(const std::vector<std::string>& tokens, const MinHashParams& params = {});

/// Fraction of equal slots. Both empty 1.0, one empty 0.0. Throws
/// ParamsMismatch for incompatible signatures.
double similarity(const MinHashSignature& a, const MinHashSignature& b);

double exact_jaccard(const std::set<std::string>& a, const std::set<std::string>& b);

/// w-gram shingles (tokens joined by 0x1f); w = 1 gives the token set. A
/// sequence shorter than w is a single shingle.
std::set<std::string> shingles(const std::vector<std::string>& tokens, std::uint32_t w);

struct SignedFunction {
  std::optional<std::string> name;
  std::uint64_t entry = 0;
  MinHashSignature signature;
};

struct SignatureFile {
  MinHashParams params;
  std::vector<SignedFunction> functions;
};

std::string write_signature_file(const SignatureFile& file);
/// Throws ParseError on malformed input and ParamsMismatch when a slot
/// list does not match k.
SignatureFile read_signature_file(std::string_view text);

}  // namespace keydiff
