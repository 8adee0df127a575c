#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "keydiff/cfg.hpp"
#include "keydiff/expr.hpp"
#include "keydiff/program.hpp"
#include "keydiff/simplify.hpp"

namespace keydiff {

/// Var allocation shared by every state copy of one function's analysis.
///
/// Registers read before any write get one Var per family for the whole
/// function. Values defined by an instruction (call results, unsupported
/// destinations, ...) get one Var per (instruction address, slot), so a
/// re-executed instruction reuses its Var and no Var has two definition
/// sites.
class VarPool {
 public:
  SymExpr entry_register(Reg r);
  SymExpr defined_at(std::uint64_t address, std::uint32_t slot);
  void bind_entry(Reg r, SymExpr value) { entry_.emplace(r, std::move(value)); }
  std::uint32_t next() const { return next_; }
  void set_next(std::uint32_t n) { next_ = n; }

 private:
  std::uint32_t next_ = 0;
  std::map<Reg, SymExpr> entry_;
  std::map<std::pair<std::uint64_t, std::uint32_t>, SymExpr> sites_;
};

struct MemoryCell {
  SymExpr address;
  SymExpr value;
};

struct MachineState {
  std::map<Reg, SymExpr> registers;
  /// Keyed by to_string of the simplified address.
  std::map<std::string, MemoryCell> memory;
  std::optional<std::pair<SymExpr, SymExpr>> last_compare;
  /// Argument registers (rdi, rsi, rdx, rcx, r8, r9 as bits 0..5) written
  /// since entry or the previous call.
  std::uint8_t abi_written = 0;
  std::shared_ptr<VarPool> vars = std::make_shared<VarPool>();
  std::size_t rule_budget = kDefaultRuleBudget;

  std::uint32_t next_var() const { return vars->next(); }
  SymExpr read(Reg r) const;
};

/// Whether the instruction overwrites its first operand (modeled
/// mnemonics plus the conservative table used for unsupported ones).
bool writes_first_operand(std::string_view mnemonic);

/// rdi, rsi, rdx, rcx, r8, r9 become Var0..Var5.
MachineState seed_arguments(MachineState state);

/// Expression of one operand. Memory operands also carry their address.
struct OperandValue {
  SymExpr value;
  std::optional<SymExpr> address;

  friend bool operator==(const OperandValue&, const OperandValue&) = default;
};

struct StepRecord {
  std::vector<OperandValue> operands;
  /// Argument expressions captured at a call.
  std::vector<SymExpr> call_args;
  bool unsupported = false;
};

/// Executes one instruction in place. Source operands are recorded before
/// the destination is overwritten, the destination after.
StepRecord symbolic_step(const Instruction& insn, MachineState& state);

std::pair<MachineState, StepRecord> symbolic_step(const Instruction& insn, const MachineState& state);

struct InstructionTrace {
  StepRecord first;
  std::optional<StepRecord> second;
  /// Pass-1 record with operands that changed in pass 2 wrapped in Iter.
  StepRecord merged;
};

struct TraversalRecord {
  std::map<std::uint64_t, InstructionTrace> traces;  // by address
  std::vector<std::string> diagnostics;
  std::size_t steps = 0;
  std::size_t loops_processed = 0;
  std::uint32_t vars_allocated = 0;
  std::size_t unsupported = 0;
};

struct TraversalOptions {
  std::size_t rule_budget = kDefaultRuleBudget;
};

/// Depth-first complete instruction traversal. Children are visited lowest
/// address first, each from a copy of its parent's post-state. Reaching an
/// instruction already on the DFS stack re-executes the stack path from
/// that instruction once more and wraps changed operands, registers and
/// memory cells in Iter.
TraversalRecord traverse(const Function& f, const Cfg& cfg, const TraversalOptions& options = {});

/// `addr: mnemonic ops ; 1st: e1,e2 [; 2nd: e1,e2]` per executed
/// instruction, in address order.
std::string dump_record(const Function& f, const TraversalRecord& record);

}  // namespace keydiff
