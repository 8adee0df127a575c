#include "keydiff/symexec.hpp"

#include <algorithm>
#include <sstream>

namespace keydiff {

SymExpr VarPool::entry_register(Reg r) {
  auto it = entry_.find(r);
  if (it != entry_.end()) return it->second;
  SymExpr v = SymExpr::var(next_++);
  entry_.emplace(r, v);
  return v;
}

SymExpr VarPool::defined_at(std::uint64_t address, std::uint32_t slot) {
  auto key = std::make_pair(address, slot);
  auto it = sites_.find(key);
  if (it != sites_.end()) return it->second;
  SymExpr v = SymExpr::var(next_++);
  sites_.emplace(key, v);
  return v;
}

SymExpr MachineState::read(Reg r) const {
  auto it = registers.find(r);
  if (it != registers.end()) return it->second;
  return vars->entry_register(r);
}

namespace {

constexpr Reg kArgRegs[] = {Reg::rdi, Reg::rsi, Reg::rdx, Reg::rcx, Reg::r8, Reg::r9};

int arg_slot(Reg r) {
  for (int i = 0; i < 6; ++i) {
    if (kArgRegs[i] == r) return i;
  }
  return -1;
}

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

// Operand indices written by instructions outside the modeled set, plus
// implicit register outputs.
struct Defs {
  std::vector<std::size_t> operands;
  std::vector<Reg> implicit;
};

std::optional<Defs> def_table(std::string_view m) {
  static const char* const kFirstOnly[] = {
      "movzx", "movsx", "movsxd", "movzbl", "bsf",  "bsr",   "popcnt", "lzcnt", "tzcnt", "bswap",
      "rol",   "ror",   "rcl",    "rcr",    "shld", "shrd",  "andn",   "blsr",  "bzhi",  "sarx",
      "shlx",  "shrx",  "movd",   "movq",   "btc",  "btr",   "bts",    "lahf",  "movbe", "pext",
      "pdep",  "rorx",  "cvttsd2si", "cvtsd2si", "cvttss2si", "cvtss2si", "movmskps", "movmskpd",
      "pmovmskb",
  };
  for (const char* name : kFirstOnly) {
    if (m == name) return Defs{{0}, {}};
  }
  if (starts_with(m, "cmov") || starts_with(m, "set")) return Defs{{0}, {}};
  if (m == "xchg" || m == "xadd") return Defs{{0, 1}, {}};
  if (m == "cmpxchg") return Defs{{0}, {Reg::rax}};
  if (m == "div" || m == "idiv") return Defs{{}, {Reg::rax, Reg::rdx}};
  if (m == "cdqe" || m == "cwde" || m == "cbw" || m == "cwd") return Defs{{}, {Reg::rax}};
  if (m == "rdtsc") return Defs{{}, {Reg::rax, Reg::rdx}};
  if (m == "cpuid") return Defs{{}, {Reg::rax, Reg::rbx, Reg::rcx, Reg::rdx}};
  return std::nullopt;
}

class Stepper {
 public:
  Stepper(const Instruction& insn, MachineState& s) : insn_(insn), s_(s) {}

  StepRecord run();

 private:
  SymExpr simp(const SymExpr& e) const { return simplify(e, s_.rule_budget); }

  void write_reg(Reg r, SymExpr v) {
    s_.registers.insert_or_assign(r, std::move(v));
    if (int slot = arg_slot(r); slot >= 0) s_.abi_written |= static_cast<std::uint8_t>(1u << slot);
  }

  bool rip_relative(const MemoryRef& m) const { return m.base == Reg::rip || m.index == Reg::rip; }

  // Value standing for a rip-relative reference: the resolved string if the
  // front end supplied one, else an opaque Var for this instruction.
  SymExpr data_reference(std::uint32_t slot) {
    if (insn_.resolved_string) return SymExpr::str(*insn_.resolved_string);
    return s_.vars->defined_at(insn_.address, slot);
  }

  SymExpr address_of(const MemoryRef& m, std::size_t operand_index) {
    if (rip_relative(m)) return data_reference(100 + static_cast<std::uint32_t>(operand_index));
    std::optional<SymExpr> acc;
    auto add = [&](SymExpr term) {
      acc = acc ? SymExpr::binary(BinaryOp::Add, *acc, std::move(term)) : std::move(term);
    };
    if (m.segment) add(SymExpr::str(*m.segment));
    if (m.base) add(s_.read(*m.base));
    if (m.index) {
      SymExpr idx = s_.read(*m.index);
      if (m.scale != 1) idx = SymExpr::binary(BinaryOp::Mul, idx, SymExpr::num(m.scale));
      add(idx);
    }
    if (m.displacement != 0 || !acc) add(SymExpr::num(m.displacement));
    return simp(*acc);
  }

  SymExpr load(const SymExpr& address) {
    auto it = s_.memory.find(to_string(address));
    if (it != s_.memory.end()) return it->second.value;
    return SymExpr::mem(address);
  }

  void store(const SymExpr& address, SymExpr value) {
    s_.memory.insert_or_assign(to_string(address), MemoryCell{address, std::move(value)});
  }

  // Reads an operand, filling in its record slot.
  SymExpr read(std::size_t i) {
    const Operand& op = insn_.operands[i];
    switch (op.kind) {
      case Operand::Kind::Register: {
        SymExpr v = s_.read(op.reg.family);
        rec_.operands[i] = OperandValue{v, std::nullopt};
        return v;
      }
      case Operand::Kind::Immediate: {
        SymExpr v = SymExpr::num(op.imm);
        rec_.operands[i] = OperandValue{v, std::nullopt};
        return v;
      }
      case Operand::Kind::Memory: {
        SymExpr addr = address_of(op.mem, i);
        SymExpr v = rip_relative(op.mem) ? data_reference(200 + static_cast<std::uint32_t>(i)) : load(addr);
        rec_.operands[i] = OperandValue{v, addr};
        return v;
      }
      case Operand::Kind::Label: {
        SymExpr v = op.label.symbol ? SymExpr::str(*op.label.symbol) : SymExpr::num(static_cast<std::int64_t>(*op.label.address));
        rec_.operands[i] = OperandValue{v, std::nullopt};
        return v;
      }
    }
    return SymExpr::num(0);
  }

  void write(std::size_t i, SymExpr v) {
    const Operand& op = insn_.operands[i];
    if (op.is_register()) {
      write_reg(op.reg.family, v);
      rec_.operands[i] = OperandValue{v, std::nullopt};
    } else if (op.is_memory()) {
      SymExpr addr = address_of(op.mem, i);
      store(addr, v);
      rec_.operands[i] = OperandValue{v, addr};
    }
  }

  SymExpr fresh(std::uint32_t slot) { return s_.vars->defined_at(insn_.address, slot); }

  void binary(BinaryOp op) {
    SymExpr d = read(0);
    SymExpr src = insn_.operands.size() > 1 ? read(1) : SymExpr::num(1);
    write(0, simp(SymExpr::binary(op, d, src)));
  }

  void push(const SymExpr& v) {
    SymExpr sp = simp(SymExpr::binary(BinaryOp::Sub, s_.read(Reg::rsp), SymExpr::num(8)));
    write_reg(Reg::rsp, sp);
    store(sp, v);
  }

  SymExpr pop() {
    SymExpr sp = s_.read(Reg::rsp);
    SymExpr v = load(sp);
    write_reg(Reg::rsp, simp(SymExpr::binary(BinaryOp::Add, sp, SymExpr::num(8))));
    return v;
  }

  SymExpr carry() {
    if (!s_.last_compare) return fresh(50);
    return SymExpr::flag(FlagKind::CF, s_.last_compare->first, s_.last_compare->second);
  }

  void call() {
    if (!insn_.operands.empty()) read(0);
    for (Reg r : kArgRegs) {
      if (!(s_.abi_written & (1u << arg_slot(r)))) break;
      rec_.call_args.push_back(s_.read(r));
    }
    s_.registers.insert_or_assign(Reg::rax, fresh(0));
    s_.abi_written = 0;
  }

  void unsupported() {
    rec_.unsupported = true;
    std::vector<bool> is_def(insn_.operands.size(), false);
    auto defs = def_table(insn_.mnemonic);
    if (defs) {
      for (std::size_t i : defs->operands) {
        if (i < is_def.size()) is_def[i] = true;
      }
    } else {
      for (std::size_t i = 0; i < insn_.operands.size(); ++i) is_def[i] = insn_.operands[i].is_register();
    }
    for (std::size_t i = 0; i < insn_.operands.size(); ++i) {
      if (!is_def[i] || insn_.operands[i].is_memory()) read(i);
    }
    std::uint32_t slot = 0;
    for (std::size_t i = 0; i < insn_.operands.size(); ++i) {
      if (is_def[i]) write(i, fresh(slot++));
    }
    if (defs) {
      for (Reg r : defs->implicit) write_reg(r, fresh(10 + static_cast<std::uint32_t>(r)));
    }
  }

  const Instruction& insn_;
  MachineState& s_;
  StepRecord rec_;
};

StepRecord Stepper::run() {
  const std::string& m = insn_.mnemonic;
  const std::size_t n = insn_.operands.size();
  rec_.operands.assign(n, OperandValue{SymExpr::num(0), std::nullopt});
  if (insn_.unparsed_operands) {
    rec_.unsupported = true;
    return rec_;
  }
  auto arity = [&](std::size_t lo, std::size_t hi) { return n >= lo && n <= hi; };

  if ((m == "mov" || m == "movabs") && arity(2, 2)) {
    write(0, read(1));
  } else if (m == "lea" && arity(2, 2) && insn_.operands[1].is_memory()) {
    SymExpr addr = address_of(insn_.operands[1].mem, 1);
    rec_.operands[1] = OperandValue{addr, addr};
    write(0, addr);
  } else if ((m == "add" || m == "sub" || m == "and" || m == "or" || m == "xor") && arity(2, 2)) {
    static const std::pair<const char*, BinaryOp> kOps[] = {
        {"add", BinaryOp::Add}, {"sub", BinaryOp::Sub}, {"and", BinaryOp::And}, {"or", BinaryOp::Or}, {"xor", BinaryOp::Xor}};
    for (const auto& [name, op] : kOps) {
      if (m == name) binary(op);
    }
  } else if ((m == "shl" || m == "sal") && arity(1, 2)) {
    binary(BinaryOp::Shl);
  } else if (m == "shr" && arity(1, 2)) {
    binary(BinaryOp::Shr);
  } else if (m == "sar" && arity(1, 2)) {
    binary(BinaryOp::Sar);
  } else if (m == "imul" && arity(2, 3)) {
    if (n == 2) {
      binary(BinaryOp::Mul);
    } else {
      SymExpr a = read(1);
      SymExpr b = read(2);
      write(0, simp(SymExpr::binary(BinaryOp::Mul, a, b)));
    }
  } else if ((m == "mul" || m == "imul") && arity(1, 1)) {
    SymExpr src = read(0);
    write_reg(Reg::rax, simp(SymExpr::binary(BinaryOp::Mul, s_.read(Reg::rax), src)));
    write_reg(Reg::rdx, fresh(1));
  } else if ((m == "inc" || m == "dec") && arity(1, 1)) {
    SymExpr d = read(0);
    write(0, simp(SymExpr::binary(m == "inc" ? BinaryOp::Add : BinaryOp::Sub, d, SymExpr::num(1))));
  } else if ((m == "neg" || m == "not") && arity(1, 1)) {
    SymExpr d = read(0);
    write(0, simp(SymExpr::unary(m == "neg" ? UnaryOp::Neg : UnaryOp::Not, d)));
  } else if (m == "push" && arity(1, 1)) {
    push(read(0));
  } else if (m == "pop" && arity(1, 1)) {
    write(0, pop());
  } else if (m == "leave" && n == 0) {
    write_reg(Reg::rsp, s_.read(Reg::rbp));
    write_reg(Reg::rbp, pop());
  } else if ((m == "cmp" || m == "test") && arity(2, 2)) {
    SymExpr a = read(0);
    SymExpr b = read(1);
    s_.last_compare = std::make_pair(a, b);
  } else if ((m == "sbb" || m == "adc") && arity(2, 2)) {
    SymExpr d = read(0);
    SymExpr src = read(1);
    SymExpr cf = carry();
    SymExpr v = m == "sbb" ? SymExpr::binary(BinaryOp::Sub, SymExpr::binary(BinaryOp::Sub, d, src), cf)
                           : SymExpr::binary(BinaryOp::Add, SymExpr::binary(BinaryOp::Add, d, src), cf);
    write(0, simp(v));
  } else if (is_call(m)) {
    call();
  } else if (is_jump(m) || is_return(m)) {
    for (std::size_t i = 0; i < n; ++i) read(i);
  } else if (m == "nop" || m == "endbr64" || m == "endbr32" || m == "hlt" || m == "ud2" || m == "int3") {
    for (std::size_t i = 0; i < n; ++i) {
      if (!insn_.operands[i].is_memory()) read(i);
    }
  } else if ((m == "cdq" || m == "cqo") && n == 0) {
    write_reg(Reg::rdx, fresh(0));
  } else {
    unsupported();
  }
  return rec_;
}

SymExpr mark(const SymExpr& pass1, const SymExpr& pass2) { return pass1 == pass2 ? pass1 : SymExpr::iter(pass1); }

// Pass-1 value wrapped in Iter where pass 2 differs; already-merged marks
// are kept.
void merge_into(StepRecord& merged, const StepRecord& first, const StepRecord& second) {
  for (std::size_t i = 0; i < merged.operands.size() && i < second.operands.size(); ++i) {
    const auto& a = first.operands[i];
    const auto& b = second.operands[i];
    if (a.value != b.value) merged.operands[i].value = SymExpr::iter(a.value);
    if (a.address && b.address && *a.address != *b.address) merged.operands[i].address = SymExpr::iter(*a.address);
  }
  if (first.call_args.size() == second.call_args.size()) {
    for (std::size_t i = 0; i < merged.call_args.size(); ++i) {
      if (first.call_args[i] != second.call_args[i]) merged.call_args[i] = SymExpr::iter(first.call_args[i]);
    }
  }
}

void mark_state(MachineState& pass1, const MachineState& pass2) {
  for (auto& [reg, value] : pass1.registers) {
    SymExpr other = pass2.read(reg);
    value = mark(value, other);
  }
  for (auto& [key, cell] : pass1.memory) {
    auto it = pass2.memory.find(key);
    if (it != pass2.memory.end()) cell.value = mark(cell.value, it->second.value);
  }
  if (pass1.last_compare && pass2.last_compare) {
    pass1.last_compare->first = mark(pass1.last_compare->first, pass2.last_compare->first);
    pass1.last_compare->second = mark(pass1.last_compare->second, pass2.last_compare->second);
  }
}

struct Frame {
  std::size_t index;
  MachineState post;
  std::vector<std::size_t> children;
  std::size_t next = 0;
};

}  // namespace

bool writes_first_operand(std::string_view m) {
  static const char* const kModeled[] = {"mov", "movabs", "add", "sub", "and", "or",  "xor", "inc", "dec",
                                         "shl", "sal",    "shr", "sar", "neg", "not", "adc", "sbb", "pop", "imul"};
  for (const char* name : kModeled) {
    if (m == name) return true;
  }
  auto defs = def_table(m);
  return defs && std::find(defs->operands.begin(), defs->operands.end(), 0) != defs->operands.end();
}

MachineState seed_arguments(MachineState state) {
  state.vars = std::make_shared<VarPool>();
  for (std::uint32_t i = 0; i < 6; ++i) {
    SymExpr v = SymExpr::var(i);
    state.registers.insert_or_assign(kArgRegs[i], v);
    state.vars->bind_entry(kArgRegs[i], v);
  }
  state.vars->set_next(6);
  state.abi_written = 0;
  return state;
}

StepRecord symbolic_step(const Instruction& insn, MachineState& state) { return Stepper(insn, state).run(); }

std::pair<MachineState, StepRecord> symbolic_step(const Instruction& insn, const MachineState& state) {
  MachineState next = state;
  StepRecord rec = symbolic_step(insn, next);
  return {std::move(next), std::move(rec)};
}

TraversalRecord traverse(const Function& f, const Cfg& cfg, const TraversalOptions& options) {
  TraversalRecord record;
  const std::size_t n = f.instructions.size();
  if (n == 0) return record;

  auto idom = immediate_dominators(cfg);
  std::vector<bool> executed(n, false);
  std::vector<std::ptrdiff_t> stack_pos(n, -1);
  std::vector<Frame> stack;

  MachineState initial;
  initial.rule_budget = options.rule_budget;
  initial = seed_arguments(std::move(initial));
  std::shared_ptr<VarPool> pool = initial.vars;

  auto execute = [&](std::size_t index, MachineState state) {
    StepRecord rec = symbolic_step(f.instructions[index], state);
    ++record.steps;
    if (rec.unsupported) {
      ++record.unsupported;
      record.diagnostics.push_back("unsupported instruction at " + hex_string(f.instructions[index].address) + ": " +
                                   f.instructions[index].mnemonic);
    }
    InstructionTrace trace{rec, std::nullopt, rec};
    record.traces.insert_or_assign(f.instructions[index].address, std::move(trace));
    executed[index] = true;
    stack_pos[index] = static_cast<std::ptrdiff_t>(stack.size());
    stack.push_back(Frame{index, std::move(state), instruction_successors(f, index)});
  };

  auto process_loop = [&](std::size_t header_pos) {
    const std::size_t header = stack[header_pos].index;
    const std::size_t tail = stack.back().index;
    if (!dominates(idom, cfg.block_of(header), cfg.block_of(tail))) {
      record.diagnostics.push_back("irreducible loop entered at " + hex_string(f.instructions[header].address) +
                                   "; treated as a plain revisit");
      return;
    }
    ++record.loops_processed;
    MachineState state = stack.back().post;
    std::vector<MachineState> pass2;
    pass2.reserve(stack.size() - header_pos);
    for (std::size_t pos = header_pos; pos < stack.size(); ++pos) {
      const auto& insn = f.instructions[stack[pos].index];
      StepRecord rec = symbolic_step(insn, state);
      ++record.steps;
      auto& trace = record.traces.at(insn.address);
      merge_into(trace.merged, trace.first, rec);
      trace.second = std::move(rec);
      pass2.push_back(state);
    }
    for (std::size_t pos = header_pos; pos < stack.size(); ++pos) mark_state(stack[pos].post, pass2[pos - header_pos]);
  };

  execute(0, std::move(initial));
  while (!stack.empty()) {
    Frame& top = stack.back();
    if (top.next < top.children.size()) {
      std::size_t child = top.children[top.next++];
      if (!executed[child]) {
        execute(child, top.post);
      } else if (stack_pos[child] >= 0) {
        process_loop(static_cast<std::size_t>(stack_pos[child]));
      }
    } else {
      stack_pos[top.index] = -1;
      stack.pop_back();
    }
  }

  std::size_t unreached = static_cast<std::size_t>(std::count(executed.begin(), executed.end(), false));
  if (unreached > 0) {
    record.diagnostics.push_back(std::to_string(unreached) + " unreachable instruction(s) not executed");
  }
  record.vars_allocated = pool->next();
  return record;
}

std::string dump_record(const Function& f, const TraversalRecord& record) {
  std::ostringstream out;
  auto values = [](const StepRecord& r) {
    std::string s;
    for (std::size_t i = 0; i < r.operands.size(); ++i) {
      if (i) s += ",";
      s += to_string(r.operands[i].value);
    }
    return s;
  };
  for (const auto& insn : f.instructions) {
    out << hex_string(insn.address) << ": " << to_string(insn);
    auto it = record.traces.find(insn.address);
    if (it == record.traces.end()) {
      out << " ; unreached\n";
      continue;
    }
    out << " ; 1st: " << values(it->second.first);
    if (it->second.second) out << " ; 2nd: " << values(*it->second.second);
    out << "\n";
  }
  return out.str();
}

}  // namespace keydiff
