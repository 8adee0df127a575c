#pragma once

#include <cstddef>

#include "keydiff/expr.hpp"

namespace keydiff {

inline constexpr std::size_t kDefaultRuleBudget = 1000;

struct SimplifyOptions {
  std::size_t rule_budget = kDefaultRuleBudget;
  /// Skip subtrees already marked as normal forms. Tests turn this off to
  /// check idempotence on fresh trees.
  bool trust_normal_marks = true;
};

struct SimplifyResult {
  SymExpr expr;
  std::size_t applications = 0;
  bool budget_exhausted = false;
};

/// Bounded rewrite to a normal form.
///
/// Arithmetic (+, -, *, neg, shl by a constant) is normalized as a
/// polynomial over 64-bit wrapping integers whose atoms are the remaining
/// node kinds. &, | and ^ are flattened, constant-folded and ordered;
/// idempotent and self-cancelling operands are removed. Linear combinations
/// of x, y, x&y, x|y and x^y over the same operand pair are rewritten to the
/// shortest equivalent form, which covers (x|y)-(x&y) => x^y and
/// (x&y)+(x|y) => x+y.
///
/// Every node normalization counts against the budget. When it runs out the
/// partially simplified tree is returned and budget_exhausted is set.
SimplifyResult simplify_with(const SymExpr& e, const SimplifyOptions& options);

SymExpr simplify(const SymExpr& e, std::size_t rule_budget = kDefaultRuleBudget);

}  // namespace keydiff
