#include "keydiff/simplify.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>
#include <utility>
#include <vector>

namespace keydiff {
namespace {

using K = SymExpr::Kind;
using Monomial = std::vector<SymExpr>;

struct MonomialLess {
  bool operator()(const Monomial& a, const Monomial& b) const {
    std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (int c = compare(a[i], b[i])) return c < 0;
    }
    return a.size() < b.size();
  }
};

// Coefficients are elements of Z/2^64; zero entries are erased eagerly.
using Poly = std::map<Monomial, std::uint64_t, MonomialLess>;

constexpr std::size_t kMaxProductTerms = 256;

void add_term(Poly& p, const Monomial& m, std::uint64_t c) {
  if (c == 0) return;
  auto [it, inserted] = p.emplace(m, c);
  if (!inserted) {
    it->second += c;
    if (it->second == 0) p.erase(it);
  }
}

void add_into(Poly& dst, const Poly& src, std::uint64_t scale = 1) {
  for (const auto& [m, c] : src) add_term(dst, m, c * scale);
}

Poly constant(std::uint64_t c) {
  Poly p;
  add_term(p, {}, c);
  return p;
}

Poly single_atom(const SymExpr& atom) {
  Poly p;
  p.emplace(Monomial{atom}, 1);
  return p;
}

bool is_arith(const SymExpr& e) {
  if (e.kind() == K::Num) return true;
  if (e.kind() == K::UnOp) return e.un_op() == UnaryOp::Neg;
  if (e.kind() != K::BinOp) return false;
  switch (e.bin_op()) {
    case BinaryOp::Add:
    case BinaryOp::Sub:
    case BinaryOp::Mul: return true;
    case BinaryOp::Shl: return e.rhs().is_num();
    default: return false;
  }
}

bool is_bitwise(BinaryOp op) { return op == BinaryOp::And || op == BinaryOp::Or || op == BinaryOp::Xor; }

std::int64_t as_signed(std::uint64_t v) { return static_cast<std::int64_t>(v); }

class Simplifier {
 public:
  explicit Simplifier(const SimplifyOptions& options) : options_(options) {}

  SymExpr norm(const SymExpr& e) {
    if (options_.trust_normal_marks && e.normal()) return e;
    if (exhausted_) return e;
    if (applications_ >= options_.rule_budget) {
      exhausted_ = true;
      return e;
    }
    ++applications_;

    SymExpr result = e;
    switch (e.kind()) {
      case K::Num:
      case K::Var:
      case K::Str: break;
      case K::Mem: {
        SymExpr a = norm(e.lhs());
        if (!a.same_node(e.lhs())) result = SymExpr::mem(a);
        break;
      }
      case K::Iter: result = SymExpr::iter(norm(e.lhs())); break;
      case K::Flag: result = SymExpr::flag(e.flag_kind(), norm(e.lhs()), norm(e.rhs())); break;
      case K::UnOp:
        if (e.un_op() == UnaryOp::Neg) {
          result = from_poly(arith(e));
        } else {
          result = not_of(norm(e.lhs()));
        }
        break;
      case K::BinOp: {
        BinaryOp op = e.bin_op();
        if (is_bitwise(op)) {
          result = bitwise(op, e);
        } else if (op == BinaryOp::Shr || op == BinaryOp::Sar) {
          result = right_shift(op, norm(e.lhs()), norm(e.rhs()));
        } else {
          result = from_poly(arith(e));
        }
        break;
      }
    }
    if (!exhausted_) result.mark_normal();
    return result;
  }

  std::size_t applications() const { return applications_; }
  bool exhausted() const { return exhausted_; }

 private:
  // Polynomial of a not-yet-normalized arithmetic node.
  Poly arith(const SymExpr& e) {
    switch (e.kind()) {
      case K::Num: return constant(static_cast<std::uint64_t>(e.num_value()));
      case K::UnOp: {
        Poly p;
        add_into(p, poly_of(norm(e.lhs())), ~std::uint64_t{0});
        return p;
      }
      case K::BinOp: {
        SymExpr l = norm(e.lhs());
        SymExpr r = norm(e.rhs());
        return combine(e.bin_op(), l, r);
      }
      default: return single_atom(norm(e));
    }
  }

  Poly combine(BinaryOp op, const SymExpr& l, const SymExpr& r) {
    switch (op) {
      case BinaryOp::Add: {
        Poly p = poly_of(l);
        add_into(p, poly_of(r));
        return p;
      }
      case BinaryOp::Sub: {
        Poly p = poly_of(l);
        add_into(p, poly_of(r), ~std::uint64_t{0});
        return p;
      }
      case BinaryOp::Mul: return multiply(poly_of(l), poly_of(r));
      case BinaryOp::Shl:
        if (r.is_num()) {
          Poly p;
          add_into(p, poly_of(l), std::uint64_t{1} << (static_cast<std::uint64_t>(r.num_value()) & 63));
          return p;
        }
        if (l.is_num(0)) return {};
        {
          SymExpr atom = SymExpr::binary(BinaryOp::Shl, l, r);
          if (!exhausted_) atom.mark_normal();
          return single_atom(atom);
        }
      default: return single_atom(SymExpr::binary(op, l, r));
    }
  }

  // Polynomial view of an already-normalized expression.
  Poly poly_of(const SymExpr& x) {
    if (!is_arith(x)) return single_atom(x);
    switch (x.kind()) {
      case K::Num: return constant(static_cast<std::uint64_t>(x.num_value()));
      case K::UnOp: {
        Poly p;
        add_into(p, poly_of(x.lhs()), ~std::uint64_t{0});
        return p;
      }
      default: return combine(x.bin_op(), x.lhs(), x.rhs());
    }
  }

  Poly multiply(const Poly& a, const Poly& b) {
    if (a.empty() || b.empty()) return {};
    if (a.size() * b.size() > kMaxProductTerms) {
      SymExpr atom = SymExpr::binary(BinaryOp::Mul, build(a), build(b));
      if (!exhausted_) atom.mark_normal();
      return single_atom(atom);
    }
    Poly out;
    for (const auto& [ma, ca] : a) {
      for (const auto& [mb, cb] : b) {
        Monomial m;
        m.reserve(ma.size() + mb.size());
        std::merge(ma.begin(), ma.end(), mb.begin(), mb.end(), std::back_inserter(m), SymExprLess{});
        add_term(out, m, ca * cb);
      }
    }
    return out;
  }

  // Operands of a rewritable pair: neither arithmetic nor bitwise, so the
  // composites of different pairs never nest inside each other.
  static bool is_pair_operand(const SymExpr& x) {
    if (is_arith(x)) return false;
    return !(x.kind() == K::BinOp && is_bitwise(x.bin_op()));
  }

  // Normal form of p op q for already-normal p and q.
  SymExpr pair_node(BinaryOp op, const SymExpr& p, const SymExpr& q) {
    SymExpr n = bitwise(op, SymExpr::binary(op, p, q));
    if (!exhausted_) n.mark_normal();
    return n;
  }

  // Re-express linear combinations over {p, q, p&q, p|q, p^q}.
  void reduce_mixed(Poly& poly) {
    std::set<std::pair<SymExpr, SymExpr>, PairLess> pairs;
    for (const auto& [m, c] : poly) {
      if (m.size() != 1 || m[0].kind() != K::BinOp || !is_bitwise(m[0].bin_op())) continue;
      const SymExpr& atom = m[0];
      if (is_pair_operand(atom.lhs()) && is_pair_operand(atom.rhs()) && !(atom.lhs() == atom.rhs())) {
        pairs.emplace(atom.lhs(), atom.rhs());
      }
    }
    if (pairs.empty()) return;

    auto take = [&poly](SymExpr atom) {
      auto it = poly.find(Monomial{atom});
      if (it == poly.end()) return std::uint64_t{0};
      std::uint64_t c = it->second;
      poly.erase(it);
      return c;
    };

    struct Basis {
      SymExpr p, q, conj;
      std::uint64_t conj_coeff;
    };
    std::vector<Basis> bases;
    for (const auto& [p, q] : pairs) {
      SymExpr conj = pair_node(BinaryOp::And, p, q);
      std::uint64_t c = take(conj);
      std::uint64_t o = take(pair_node(BinaryOp::Or, p, q));
      std::uint64_t x = take(pair_node(BinaryOp::Xor, p, q));
      add_term(poly, {p}, o + x);
      add_term(poly, {q}, o + x);
      bases.push_back({p, q, conj, c - o - 2 * x});
    }

    auto coeff = [&poly](const SymExpr& atom) {
      auto it = poly.find(Monomial{atom});
      return it == poly.end() ? std::uint64_t{0} : it->second;
    };
    auto set = [&poly](const SymExpr& atom, std::uint64_t c) {
      poly.erase(Monomial{atom});
      add_term(poly, {atom}, c);
    };

    for (const auto& b : bases) {
      std::uint64_t a = coeff(b.p);
      std::uint64_t bq = coeff(b.q);
      std::uint64_t c = b.conj_coeff;
      struct Rep {
        BinaryOp op;
        std::uint64_t bit, p, q;
        int terms() const { return (bit != 0) + (p != 0) + (q != 0); }
      };
      std::vector<Rep> reps;
      reps.push_back({BinaryOp::And, c, a, bq});
      std::uint64_t alpha_or = 0 - c;
      reps.push_back({BinaryOp::Or, alpha_or, a + c, bq + c});
      if ((c & 1) == 0) {
        std::uint64_t half = (0 - c) >> 1;
        std::uint64_t other = half + (std::uint64_t{1} << 63);
        auto magnitude = [](std::uint64_t v) {
          std::int64_t s = as_signed(v);
          return s < 0 ? 0 - static_cast<std::uint64_t>(s) : static_cast<std::uint64_t>(s);
        };
        Rep small{BinaryOp::Xor, half, a - half, bq - half};
        Rep large{BinaryOp::Xor, other, a - other, bq - other};
        if (magnitude(other) < magnitude(half)) std::swap(small, large);
        reps.push_back(large.terms() < small.terms() ? large : small);
      }
      const Rep* best = &reps[0];
      for (const auto& r : reps) {
        if (r.terms() < best->terms()) best = &r;
      }
      if (best->op != BinaryOp::And || best->bit != c) ++applications_;
      set(b.p, best->p);
      set(b.q, best->q);
      if (best->bit != 0) add_term(poly, {pair_node(best->op, b.p, b.q)}, best->bit);
    }
  }

  struct PairLess {
    bool operator()(const std::pair<SymExpr, SymExpr>& a, const std::pair<SymExpr, SymExpr>& b) const {
      if (int c = compare(a.first, b.first)) return c < 0;
      return compare(a.second, b.second) < 0;
    }
  };

  SymExpr from_poly(Poly poly) {
    reduce_mixed(poly);
    return build(poly);
  }

  static SymExpr product(const Monomial& m, std::uint64_t coeff) {
    SymExpr acc = SymExpr::num(0);
    bool have = false;
    if (coeff != 1) {
      acc = SymExpr::num(as_signed(coeff));
      have = true;
    }
    for (const auto& atom : m) {
      acc = have ? SymExpr::binary(BinaryOp::Mul, acc, atom) : atom;
      have = true;
    }
    return acc;
  }

  static SymExpr build(const Poly& poly) {
    if (poly.empty()) return SymExpr::num(0);
    std::vector<std::pair<const Monomial*, std::uint64_t>> terms;
    std::uint64_t constant_term = 0;
    for (const auto& [m, c] : poly) {
      if (m.empty()) {
        constant_term = c;
      } else {
        terms.emplace_back(&m, c);
      }
    }
    if (terms.empty()) return SymExpr::num(as_signed(constant_term));

    auto negative = [](std::uint64_t c) {
      return as_signed(c) < 0 && as_signed(c) != std::numeric_limits<std::int64_t>::min();
    };

    SymExpr acc = SymExpr::num(0);
    bool first = true;
    for (const auto& [m, c] : terms) {
      if (first) {
        if (c == ~std::uint64_t{0}) {
          acc = SymExpr::unary(UnaryOp::Neg, product(*m, 1));
        } else {
          acc = product(*m, c);
        }
        first = false;
      } else if (negative(c)) {
        acc = SymExpr::binary(BinaryOp::Sub, acc, product(*m, 0 - c));
      } else {
        acc = SymExpr::binary(BinaryOp::Add, acc, product(*m, c));
      }
    }
    if (constant_term != 0) {
      if (negative(constant_term)) {
        acc = SymExpr::binary(BinaryOp::Sub, acc, SymExpr::num(as_signed(0 - constant_term)));
      } else {
        acc = SymExpr::binary(BinaryOp::Add, acc, SymExpr::num(as_signed(constant_term)));
      }
    }
    return acc;
  }

  SymExpr not_of(const SymExpr& a) {
    if (a.is_num()) return SymExpr::num(~a.num_value());
    if (a.kind() == K::UnOp && a.un_op() == UnaryOp::Not) return a.lhs();
    return SymExpr::unary(UnaryOp::Not, a);
  }

  void flatten(BinaryOp op, const SymExpr& e, std::vector<SymExpr>& out) {
    if (e.kind() == K::BinOp && e.bin_op() == op) {
      flatten(op, e.lhs(), out);
      flatten(op, e.rhs(), out);
      return;
    }
    SymExpr n = norm(e);
    if (n.kind() == K::BinOp && n.bin_op() == op && !n.same_node(e)) {
      flatten(op, n, out);
    } else {
      out.push_back(n);
    }
  }

  SymExpr bitwise(BinaryOp op, const SymExpr& e) {
    std::vector<SymExpr> operands;
    flatten(op, e.lhs(), operands);
    flatten(op, e.rhs(), operands);

    std::uint64_t acc = op == BinaryOp::And ? ~std::uint64_t{0} : 0;
    std::vector<SymExpr> rest;
    for (auto& x : operands) {
      if (x.is_num()) {
        auto v = static_cast<std::uint64_t>(x.num_value());
        if (op == BinaryOp::And) acc &= v;
        else if (op == BinaryOp::Or) acc |= v;
        else acc ^= v;
      } else {
        rest.push_back(std::move(x));
      }
    }
    std::sort(rest.begin(), rest.end(), SymExprLess{});

    std::vector<SymExpr> kept;
    for (std::size_t i = 0; i < rest.size();) {
      std::size_t j = i;
      while (j < rest.size() && rest[j] == rest[i]) ++j;
      std::size_t run = j - i;
      if (op != BinaryOp::Xor || run % 2 == 1) kept.push_back(rest[i]);
      i = j;
    }

    if (op == BinaryOp::And && acc == 0) return SymExpr::num(0);
    if (op == BinaryOp::Or && acc == ~std::uint64_t{0}) return SymExpr::num(-1);

    std::uint64_t neutral = op == BinaryOp::And ? ~std::uint64_t{0} : 0;
    if (kept.empty()) return SymExpr::num(as_signed(acc));

    SymExpr chain = kept[0];
    for (std::size_t i = 1; i < kept.size(); ++i) chain = SymExpr::binary(op, chain, kept[i]);
    if (acc == neutral) return chain;
    if (op == BinaryOp::Xor && acc == ~std::uint64_t{0}) return not_of(chain);
    return SymExpr::binary(op, chain, SymExpr::num(as_signed(acc)));
  }

  static SymExpr right_shift(BinaryOp op, const SymExpr& l, const SymExpr& r) {
    if (r.is_num()) {
      unsigned amount = static_cast<unsigned>(static_cast<std::uint64_t>(r.num_value()) & 63);
      if (amount == 0) return l;
      if (l.is_num()) {
        if (op == BinaryOp::Shr) return SymExpr::num(as_signed(static_cast<std::uint64_t>(l.num_value()) >> amount));
        return SymExpr::num(l.num_value() >> amount);
      }
    }
    if (l.is_num(0)) return l;
    return SymExpr::binary(op, l, r);
  }

  const SimplifyOptions& options_;
  std::size_t applications_ = 0;
  bool exhausted_ = false;
};

}  // namespace

SimplifyResult simplify_with(const SymExpr& e, const SimplifyOptions& options) {
  Simplifier s(options);
  SymExpr out = s.norm(e);
  return SimplifyResult{out, s.applications(), s.exhausted()};
}

SymExpr simplify(const SymExpr& e, std::size_t rule_budget) {
  return simplify_with(e, SimplifyOptions{rule_budget, true}).expr;
}

}  // namespace keydiff
