#include "keydiff/expr.hpp"

#include <cassert>
#include <cstdio>
#include <stdexcept>

namespace keydiff {

const char* symbol(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Mul: return "*";
    case BinaryOp::And: return "&";
    case BinaryOp::Or: return "|";
    case BinaryOp::Xor: return "^";
    case BinaryOp::Shl: return "<<";
    case BinaryOp::Shr: return ">>";
    case BinaryOp::Sar: return "s>>";
  }
  return "?";
}

const char* symbol(UnaryOp op) { return op == UnaryOp::Neg ? "-" : "~"; }

const char* name(FlagKind kind) {
  switch (kind) {
    case FlagKind::CF: return "CF";
    case FlagKind::ZF: return "ZF";
    case FlagKind::SF: return "SF";
    case FlagKind::OF: return "OF";
  }
  return "?";
}

struct SymExpr::Node {
  Kind kind;
  std::uint8_t op = 0;
  std::int64_t number = 0;
  std::string text;
  std::vector<SymExpr> children;
  std::size_t size = 1;
  mutable std::atomic<bool> normal{false};
};

namespace {

template <typename Node>
std::shared_ptr<Node> make_node(SymExpr::Kind kind) {
  auto n = std::make_shared<Node>();
  n->kind = kind;
  return n;
}

}  // namespace

SymExpr SymExpr::var(std::uint32_t index) {
  auto n = make_node<Node>(Kind::Var);
  n->number = index;
  return SymExpr(std::move(n));
}

SymExpr SymExpr::num(std::int64_t value) {
  auto n = make_node<Node>(Kind::Num);
  n->number = value;
  return SymExpr(std::move(n));
}

SymExpr SymExpr::str(std::string text) {
  auto n = make_node<Node>(Kind::Str);
  n->text = std::move(text);
  return SymExpr(std::move(n));
}

SymExpr SymExpr::mem(SymExpr address) {
  auto n = make_node<Node>(Kind::Mem);
  n->size = 1 + address.size();
  n->children.push_back(std::move(address));
  return SymExpr(std::move(n));
}

SymExpr SymExpr::binary(BinaryOp op, SymExpr lhs, SymExpr rhs) {
  auto n = make_node<Node>(Kind::BinOp);
  n->op = static_cast<std::uint8_t>(op);
  n->size = 1 + lhs.size() + rhs.size();
  n->children.push_back(std::move(lhs));
  n->children.push_back(std::move(rhs));
  return SymExpr(std::move(n));
}

SymExpr SymExpr::unary(UnaryOp op, SymExpr operand) {
  auto n = make_node<Node>(Kind::UnOp);
  n->op = static_cast<std::uint8_t>(op);
  n->size = 1 + operand.size();
  n->children.push_back(std::move(operand));
  return SymExpr(std::move(n));
}

SymExpr SymExpr::iter(SymExpr initial) {
  if (initial.kind() == Kind::Iter) return initial;
  auto n = make_node<Node>(Kind::Iter);
  n->size = 1 + initial.size();
  n->children.push_back(std::move(initial));
  return SymExpr(std::move(n));
}

SymExpr SymExpr::flag(FlagKind kind, SymExpr lhs, SymExpr rhs) {
  auto n = make_node<Node>(Kind::Flag);
  n->op = static_cast<std::uint8_t>(kind);
  n->size = 1 + lhs.size() + rhs.size();
  n->children.push_back(std::move(lhs));
  n->children.push_back(std::move(rhs));
  return SymExpr(std::move(n));
}

SymExpr::Kind SymExpr::kind() const { return node_->kind; }

std::int64_t SymExpr::num_value() const {
  assert(kind() == Kind::Num);
  return node_->number;
}

std::uint32_t SymExpr::var_index() const {
  assert(kind() == Kind::Var);
  return static_cast<std::uint32_t>(node_->number);
}

const std::string& SymExpr::str_text() const {
  assert(kind() == Kind::Str);
  return node_->text;
}

BinaryOp SymExpr::bin_op() const {
  assert(kind() == Kind::BinOp);
  return static_cast<BinaryOp>(node_->op);
}

UnaryOp SymExpr::un_op() const {
  assert(kind() == Kind::UnOp);
  return static_cast<UnaryOp>(node_->op);
}

FlagKind SymExpr::flag_kind() const {
  assert(kind() == Kind::Flag);
  return static_cast<FlagKind>(node_->op);
}

const SymExpr& SymExpr::lhs() const {
  assert(!node_->children.empty());
  return node_->children[0];
}

const SymExpr& SymExpr::rhs() const {
  assert(node_->children.size() == 2);
  return node_->children[1];
}

bool SymExpr::normal() const { return node_->normal.load(std::memory_order_relaxed); }

void SymExpr::mark_normal() const { node_->normal.store(true, std::memory_order_relaxed); }

std::size_t SymExpr::size() const { return node_->size; }

bool operator==(const SymExpr& a, const SymExpr& b) {
  return a.same_node(b) || compare(a, b) == 0;
}

int compare(const SymExpr& a, const SymExpr& b) {
  if (a.same_node(b)) return 0;
  if (a.kind() != b.kind()) return static_cast<int>(a.kind()) < static_cast<int>(b.kind()) ? -1 : 1;
  auto cmp3 = [](auto x, auto y) { return x < y ? -1 : (y < x ? 1 : 0); };
  switch (a.kind()) {
    case SymExpr::Kind::Num: return cmp3(a.num_value(), b.num_value());
    case SymExpr::Kind::Var: return cmp3(a.var_index(), b.var_index());
    case SymExpr::Kind::Str: {
      int c = a.str_text().compare(b.str_text());
      return c < 0 ? -1 : (c > 0 ? 1 : 0);
    }
    case SymExpr::Kind::Mem:
    case SymExpr::Kind::Iter: return compare(a.lhs(), b.lhs());
    case SymExpr::Kind::UnOp:
      if (a.un_op() != b.un_op()) return cmp3(a.un_op(), b.un_op());
      return compare(a.lhs(), b.lhs());
    case SymExpr::Kind::BinOp:
      if (a.bin_op() != b.bin_op()) return cmp3(a.bin_op(), b.bin_op());
      if (int c = compare(a.lhs(), b.lhs())) return c;
      return compare(a.rhs(), b.rhs());
    case SymExpr::Kind::Flag:
      if (a.flag_kind() != b.flag_kind()) return cmp3(a.flag_kind(), b.flag_kind());
      if (int c = compare(a.lhs(), b.lhs())) return c;
      return compare(a.rhs(), b.rhs());
  }
  return 0;
}

namespace {

constexpr int kAtomPrec = 10;
constexpr int kUnaryPrec = 6;

int precedence(BinaryOp op) {
  switch (op) {
    case BinaryOp::Mul: return 5;
    case BinaryOp::Add:
    case BinaryOp::Sub: return 4;
    case BinaryOp::Shl:
    case BinaryOp::Shr:
    case BinaryOp::Sar: return 3;
    case BinaryOp::And: return 2;
    case BinaryOp::Xor: return 1;
    case BinaryOp::Or: return 0;
  }
  return 0;
}

int precedence(const SymExpr& e) {
  switch (e.kind()) {
    case SymExpr::Kind::BinOp: return precedence(e.bin_op());
    case SymExpr::Kind::UnOp: return kUnaryPrec;
    case SymExpr::Kind::Num: return e.num_value() < 0 ? kUnaryPrec : kAtomPrec;
    default: return kAtomPrec;
  }
}

std::string decimal(std::uint64_t v) { return std::to_string(v); }

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
  return buf;
}

class Renderer {
 public:
  explicit Renderer(std::vector<ExprPiece>& out) : out_(out) {}

  void emit(const SymExpr& e, bool in_address, bool hex_number = false) {
    using K = SymExpr::Kind;
    switch (e.kind()) {
      case K::Num: {
        std::int64_t v = e.num_value();
        std::uint64_t mag = v < 0 ? 0 - static_cast<std::uint64_t>(v) : static_cast<std::uint64_t>(v);
        if (v < 0) piece(ExprPiece::Type::Operator, "-");
        piece(ExprPiece::Type::Operand, hex_number ? hex(mag) : decimal(mag));
        return;
      }
      case K::Var: piece(ExprPiece::Type::Operand, "VAR" + std::to_string(e.var_index())); return;
      case K::Str: piece(ExprPiece::Type::Operand, "\"" + e.str_text() + "\""); return;
      case K::Mem:
        piece(ExprPiece::Type::Open, "[");
        emit(e.lhs(), true);
        piece(ExprPiece::Type::Close, "]");
        return;
      case K::Iter:
        piece(ExprPiece::Type::Open, "ITER(");
        emit(e.lhs(), in_address);
        piece(ExprPiece::Type::Close, ")");
        return;
      case K::Flag:
        piece(ExprPiece::Type::Open, std::string(name(e.flag_kind())) + "(");
        emit(e.lhs(), false);
        piece(ExprPiece::Type::Separator, ", ");
        emit(e.rhs(), false);
        piece(ExprPiece::Type::Close, ")");
        return;
      case K::UnOp:
        piece(ExprPiece::Type::Operator, symbol(e.un_op()));
        emit_child(e.lhs(), precedence(e.lhs()) < kUnaryPrec, in_address);
        return;
      case K::BinOp: {
        int p = precedence(e.bin_op());
        emit_child(e.lhs(), precedence(e.lhs()) < p, in_address);
        piece(ExprPiece::Type::Operator, symbol(e.bin_op()));
        bool hex_rhs = in_address && (e.bin_op() == BinaryOp::Add || e.bin_op() == BinaryOp::Sub) && e.rhs().is_num();
        emit_child(e.rhs(), precedence(e.rhs()) <= p, in_address, hex_rhs);
        return;
      }
    }
  }

 private:
  void emit_child(const SymExpr& e, bool parens, bool in_address, bool hex_number = false) {
    if (parens) piece(ExprPiece::Type::Open, "(");
    emit(e, in_address, hex_number);
    if (parens) piece(ExprPiece::Type::Close, ")");
  }

  void piece(ExprPiece::Type type, std::string text) {
    if (type == ExprPiece::Type::Close) text = text.empty() ? ")" : text;
    out_.push_back(ExprPiece{type, std::move(text)});
  }

  std::vector<ExprPiece>& out_;
};

}  // namespace

std::vector<ExprPiece> render(const SymExpr& e) {
  std::vector<ExprPiece> out;
  Renderer(out).emit(e, false);
  return out;
}

std::string to_string(const SymExpr& e) {
  std::string s;
  for (const auto& p : render(e)) s += p.text;
  return s;
}

}  // namespace keydiff
