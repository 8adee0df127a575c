#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "keydiff/expr.hpp"
#include "keydiff/program.hpp"
#include "keydiff/simplify.hpp"
#include "keydiff/symexec.hpp"

namespace keydiff {

enum class KeyKind : std::uint8_t { CallingBehavior, ComparingManner, IndirectBranch, MemoryStore };

const char* name(KeyKind kind);

/// Typed key expression. `operands` holds, per kind: Call the arguments,
/// Compare (lhs, rhs), Branch (destination), Store (address, value).
struct KeyExpr {
  KeyKind kind = KeyKind::CallingBehavior;
  std::string callee;  // Call only; display, never tokens
  std::vector<SymExpr> operands;

  friend bool operator==(const KeyExpr&, const KeyExpr&) = default;
};

/// Calls (direct or not) are CallingBehavior, cmp/test ComparingManner,
/// jmp through a register or memory IndirectBranch, and instructions that
/// overwrite a memory first operand MemoryStore.
std::optional<KeyKind> classify(const Instruction& insn);

/// Builds the key expression from the instruction's merged trace. Throws
/// std::logic_error if the instruction was never executed.
KeyExpr translate(const Instruction& insn, KeyKind kind, const TraversalRecord& record,
                  std::size_t rule_budget = kDefaultRuleBudget);

/// `RET_<label>(e1, ..., en)` | `e1 cmp e2` | `branch e` | `[e1] = e2`
std::string display(const KeyExpr& key);

struct KeyInstruction {
  std::uint64_t address = 0;
  KeyExpr expr;
};

/// Key instructions among the executed ones, in address order.
std::vector<KeyInstruction> extract_keys(const Function& f, const TraversalRecord& record,
                                         std::size_t rule_budget = kDefaultRuleBudget);

}  // namespace keydiff
