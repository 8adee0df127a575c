#include "keydiff/keyexpr.hpp"

#include <stdexcept>

namespace keydiff {

const char* name(KeyKind kind) {
  switch (kind) {
    case KeyKind::CallingBehavior: return "call";
    case KeyKind::ComparingManner: return "compare";
    case KeyKind::IndirectBranch: return "branch";
    case KeyKind::MemoryStore: return "store";
  }
  return "?";
}

std::optional<KeyKind> classify(const Instruction& insn) {
  const std::string& m = insn.mnemonic;
  if (is_call(m)) return KeyKind::CallingBehavior;
  if (m == "cmp" || m == "test") return KeyKind::ComparingManner;
  if (m == "jmp" && insn.operands.size() == 1 &&
      (insn.operands[0].is_register() || insn.operands[0].is_memory())) {
    return KeyKind::IndirectBranch;
  }
  if (!insn.operands.empty() && insn.operands[0].is_memory() && writes_first_operand(m)) return KeyKind::MemoryStore;
  return std::nullopt;
}

KeyExpr translate(const Instruction& insn, KeyKind kind, const TraversalRecord& record, std::size_t rule_budget) {
  auto it = record.traces.find(insn.address);
  if (it == record.traces.end()) {
    throw std::logic_error("no operand record for key instruction at " + hex_string(insn.address));
  }
  const StepRecord& rec = it->second.merged;
  auto simp = [&](const SymExpr& e) { return simplify(e, rule_budget); };
  auto operand = [&](std::size_t i) -> const OperandValue& {
    if (i >= rec.operands.size()) {
      throw std::logic_error("missing operand " + std::to_string(i) + " at " + hex_string(insn.address));
    }
    return rec.operands[i];
  };

  KeyExpr key;
  key.kind = kind;
  switch (kind) {
    case KeyKind::CallingBehavior: {
      const Operand* target = insn.operands.empty() ? nullptr : &insn.operands[0];
      if (target && target->is_label()) {
        key.callee = target->label.symbol ? *target->label.symbol : hex_string(*target->label.address);
      } else {
        key.callee = "INDIRECT";
      }
      for (const auto& arg : rec.call_args) key.operands.push_back(simp(arg));
      break;
    }
    case KeyKind::ComparingManner:
      key.operands = {simp(operand(0).value), simp(operand(1).value)};
      break;
    case KeyKind::IndirectBranch:
      key.operands = {simp(operand(0).value)};
      break;
    case KeyKind::MemoryStore: {
      const auto& dst = operand(0);
      if (!dst.address) throw std::logic_error("store without address at " + hex_string(insn.address));
      key.operands = {simp(*dst.address), simp(dst.value)};
      break;
    }
  }
  return key;
}

std::string display(const KeyExpr& key) {
  switch (key.kind) {
    case KeyKind::CallingBehavior: {
      std::string s = "RET_" + key.callee + "(";
      for (std::size_t i = 0; i < key.operands.size(); ++i) {
        if (i) s += ", ";
        s += to_string(key.operands[i]);
      }
      return s + ")";
    }
    case KeyKind::ComparingManner: return to_string(key.operands[0]) + " cmp " + to_string(key.operands[1]);
    case KeyKind::IndirectBranch: return "branch " + to_string(key.operands[0]);
    case KeyKind::MemoryStore: return to_string(SymExpr::mem(key.operands[0])) + " = " + to_string(key.operands[1]);
  }
  return {};
}

std::vector<KeyInstruction> extract_keys(const Function& f, const TraversalRecord& record, std::size_t rule_budget) {
  std::vector<KeyInstruction> keys;
  for (const auto& insn : f.instructions) {
    if (!record.traces.count(insn.address)) continue;
    if (auto kind = classify(insn)) keys.push_back(KeyInstruction{insn.address, translate(insn, *kind, record, rule_budget)});
  }
  return keys;
}

}  // namespace keydiff
