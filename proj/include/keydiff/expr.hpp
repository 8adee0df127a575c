#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace keydiff {

enum class BinaryOp : std::uint8_t { Add, Sub, Mul, And, Or, Xor, Shl, Shr, Sar };
enum class UnaryOp : std::uint8_t { Neg, Not };
enum class FlagKind : std::uint8_t { CF, ZF, SF, OF };

const char* symbol(BinaryOp op);
const char* symbol(UnaryOp op);
const char* name(FlagKind kind);

class SymExpr;

/// Immutable symbolic expression tree with shared structure.
///
/// Copies are cheap (reference counted). Nodes are never mutated after
/// construction except for the simplifier's normal-form mark, which is a
/// relaxed atomic and therefore safe to set from any thread.
class SymExpr {
 public:
  enum class Kind : std::uint8_t { Num, Str, Var, Mem, UnOp, BinOp, Iter, Flag };

  static SymExpr var(std::uint32_t index);
  static SymExpr num(std::int64_t value);
  static SymExpr str(std::string text);
  static SymExpr mem(SymExpr address);
  static SymExpr binary(BinaryOp op, SymExpr lhs, SymExpr rhs);
  static SymExpr unary(UnaryOp op, SymExpr operand);
  /// Iter(Iter(e)) collapses to Iter(e).
  static SymExpr iter(SymExpr initial);
  static SymExpr flag(FlagKind kind, SymExpr lhs, SymExpr rhs);

  Kind kind() const;

  bool is_num() const { return kind() == Kind::Num; }
  bool is_num(std::int64_t v) const { return is_num() && num_value() == v; }

  std::int64_t num_value() const;
  std::uint32_t var_index() const;
  const std::string& str_text() const;
  BinaryOp bin_op() const;
  UnaryOp un_op() const;
  FlagKind flag_kind() const;

  /// Operand accessors. For Mem and Iter, lhs() is the single child; for
  /// UnOp, lhs() is the operand.
  const SymExpr& lhs() const;
  const SymExpr& rhs() const;

  bool same_node(const SymExpr& other) const { return node_ == other.node_; }

  bool normal() const;
  void mark_normal() const;

  std::size_t size() const;

  friend bool operator==(const SymExpr& a, const SymExpr& b);

 private:
  struct Node;
  explicit SymExpr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

/// Total order: Num < Str < Var < Mem < UnOp < BinOp < Iter < Flag, then
/// structural. Returns <0, 0, >0.
int compare(const SymExpr& a, const SymExpr& b);

struct SymExprLess {
  bool operator()(const SymExpr& a, const SymExpr& b) const { return compare(a, b) < 0; }
};

/// Display grammar: VAR<i>, ITER(e), [e], decimal numbers, "quoted" strings,
/// CF(l, r) for flags. Inside a memory dereference a subtracted constant is
/// printed as hex (e.g. [VAR6-0x48]).
std::string to_string(const SymExpr& e);

/// One lexical piece of a rendered expression. The display string is the
/// concatenation of pieces; the tokenizer consumes the same stream.
struct ExprPiece {
  enum class Type : std::uint8_t { Open, Close, Operand, Operator, Separator };
  Type type;
  std::string text;  // for Open: the opening text ("[", "(", "ITER(", "CF(")
};

std::vector<ExprPiece> render(const SymExpr& e);

}  // namespace keydiff
