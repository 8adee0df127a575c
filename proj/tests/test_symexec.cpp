#include <gtest/gtest.h>

#include <map>
#include <random>
#include <utility>

#include "keydiff/symexec.hpp"
#include "test_util.hpp"

using namespace keydiff;

namespace {

SymExpr V(std::uint32_t i) { return SymExpr::var(i); }
SymExpr N(std::int64_t v) { return SymExpr::num(v); }

Instruction ins(const std::string& text) { return testutil::assemble("t", 0x100, {text}).instructions[0]; }

MachineState seeded() { return seed_arguments(MachineState{}); }

std::string values(const StepRecord& r) {
  std::string s;
  for (const auto& o : r.operands) s += to_string(o.value) + ";";
  return s;
}

}  // namespace

TEST(SeedArguments, ArgumentRegisters) {
  MachineState s = seeded();
  EXPECT_EQ(s.read(Reg::rdi), V(0));
  EXPECT_EQ(s.read(Reg::rsi), V(1));
  EXPECT_EQ(s.read(Reg::rdx), V(2));
  EXPECT_EQ(s.read(Reg::rcx), V(3));
  EXPECT_EQ(s.read(Reg::r8), V(4));
  EXPECT_EQ(s.read(Reg::r9), V(5));
  EXPECT_EQ(s.next_var(), 6u);
}

TEST(SeedArguments, LazyMemoizedAllocation) {
  MachineState s = seeded();
  EXPECT_EQ(s.read(Reg::rbx), V(6));
  EXPECT_EQ(s.read(Reg::rbx), V(6));
  EXPECT_EQ(s.next_var(), 7u);
  MachineState copy = s;
  EXPECT_EQ(copy.read(Reg::r12), V(7));
  EXPECT_EQ(s.read(Reg::r12), V(7));  // state copies share the allocator
}

TEST(SymbolicStep, MovConstant) {
  MachineState s = seeded();
  StepRecord r = symbolic_step(ins("mov ecx, 0"), s);
  EXPECT_EQ(s.read(Reg::rcx), N(0));
  EXPECT_EQ(values(r), "0;0;");
}

TEST(SymbolicStep, CompareSetsLastCompare) {
  MachineState s = seeded();
  symbolic_step(ins("mov eax, edi"), s);
  StepRecord r = symbolic_step(ins("cmp eax, 5"), s);
  ASSERT_TRUE(s.last_compare);
  EXPECT_EQ(s.last_compare->first, V(0));
  EXPECT_EQ(s.last_compare->second, N(5));
  EXPECT_EQ(to_string(r.operands[0].value) + " cmp " + to_string(r.operands[1].value), "VAR0 cmp 5");
}

TEST(SymbolicStep, PureOverloadLeavesInputUntouched) {
  MachineState s = seeded();
  auto [next, rec] = symbolic_step(ins("mov eax, 7"), std::as_const(s));
  EXPECT_EQ(next.read(Reg::rax), N(7));
  EXPECT_FALSE(s.registers.count(Reg::rax));
}

namespace {

// Concrete interpreter for the handful of forms used below; the oracle for
// store/load through equal addresses.
struct Concrete {
  std::map<Reg, std::uint64_t> regs;
  std::map<std::uint64_t, std::uint64_t> mem;

  std::uint64_t address(const MemoryRef& m) {
    std::uint64_t a = static_cast<std::uint64_t>(m.displacement);
    if (m.base) a += regs.at(*m.base);
    if (m.index) a += regs.at(*m.index) * m.scale;
    return a;
  }
  std::uint64_t read(const Operand& o) {
    if (o.is_register()) return regs.at(o.reg.family);
    if (o.is_immediate()) return static_cast<std::uint64_t>(o.imm);
    return mem.at(address(o.mem));
  }
  void write(const Operand& o, std::uint64_t v) {
    if (o.is_register()) regs[o.reg.family] = v;
    else mem[address(o.mem)] = v;
  }
  void step(const Instruction& i) {
    if (i.mnemonic == "mov") write(i.operands[0], read(i.operands[1]));
    else if (i.mnemonic == "add") write(i.operands[0], read(i.operands[0]) + read(i.operands[1]));
    else if (i.mnemonic == "lea") write(i.operands[0], address(i.operands[1].mem));
    else throw std::invalid_argument(i.mnemonic);
  }
};

}  // namespace

TEST(SymbolicStep, StoreThenLoadThroughEqualAddress) {
  std::vector<Instruction> prog = {ins("mov [rbp-0x48], rdx"), ins("mov rax, [rbp-0x48]")};
  MachineState s = seeded();
  for (const auto& i : prog) symbolic_step(i, s);
  EXPECT_EQ(s.read(Reg::rax), V(2));

  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    Concrete c;
    std::vector<std::uint64_t> vars;
    for (Reg r : {Reg::rdi, Reg::rsi, Reg::rdx, Reg::rcx, Reg::r8, Reg::r9, Reg::rbp}) {
      c.regs[r] = rng();
      vars.push_back(c.regs[r]);
    }
    for (const auto& i : prog) c.step(i);
    EXPECT_EQ(testutil::eval(s.read(Reg::rax), vars), c.regs.at(Reg::rax));
  }
}

TEST(SymbolicStep, AddressArithmeticMatchesConcreteInterpreter) {
  std::vector<Instruction> prog = {ins("lea rax, [rdi+rsi*4+8]"), ins("add rax, rdx"), ins("mov [rax-0x10], rcx"),
                                   ins("add rdi, rdx"), ins("mov rbx, [rdi+rsi*4-8]")};
  MachineState s = seeded();
  for (const auto& i : prog) symbolic_step(i, s);
  EXPECT_EQ(s.read(Reg::rbx), V(3));
  EXPECT_EQ(to_string(s.read(Reg::rax)), "VAR0+4*VAR1+VAR2+8");
}

TEST(SymbolicStep, UnknownAddressReadIsMemOfAddress) {
  MachineState s = seeded();
  symbolic_step(ins("mov eax, dword ptr [rdi+0x10]"), s);
  EXPECT_EQ(s.read(Reg::rax), SymExpr::mem(SymExpr::binary(BinaryOp::Add, V(0), N(16))));
  EXPECT_EQ(s.next_var(), 6u);
}

TEST(SymbolicStep, PushPop) {
  MachineState s = seeded();
  symbolic_step(ins("push rdi"), s);
  symbolic_step(ins("push rsi"), s);
  symbolic_step(ins("pop rax"), s);
  symbolic_step(ins("pop rbx"), s);
  EXPECT_EQ(s.read(Reg::rax), V(1));
  EXPECT_EQ(s.read(Reg::rbx), V(0));
  EXPECT_EQ(s.read(Reg::rsp), V(6));
}

TEST(SymbolicStep, SbbAfterCompareUsesCarryFlag) {
  MachineState s = seeded();
  symbolic_step(ins("cmp edi, 5"), s);
  symbolic_step(ins("sbb ecx, ecx"), s);
  EXPECT_EQ(to_string(s.read(Reg::rcx)), "-CF(VAR0, 5)");
  symbolic_step(ins("inc ecx"), s);
  EXPECT_EQ(to_string(s.read(Reg::rcx)), "-CF(VAR0, 5)+1");
}

TEST(SymbolicStep, XorSelfIsZeroAndPartialWidthOverwritesFamily) {
  MachineState s = seeded();
  symbolic_step(ins("xor eax, eax"), s);
  EXPECT_EQ(s.read(Reg::rax), N(0));
  symbolic_step(ins("mov al, 3"), s);
  EXPECT_EQ(s.read(Reg::rax), N(3));
}

TEST(SymbolicStep, CallCapturesWrittenArgumentsAndClobbersRax) {
  MachineState s = seeded();
  symbolic_step(ins("mov ecx, 1"), s);
  symbolic_step(ins("mov esi, 9"), s);
  symbolic_step(ins("mov edi, ecx"), s);
  StepRecord r = symbolic_step(ins("call subFunc"), s);
  ASSERT_EQ(r.call_args.size(), 2u);
  EXPECT_EQ(r.call_args[0], N(1));
  EXPECT_EQ(r.call_args[1], N(9));
  EXPECT_EQ(s.read(Reg::rax), V(6));
  EXPECT_EQ(s.read(Reg::rsi), N(9));  // argument registers survive the call
  EXPECT_EQ(s.abi_written, 0);
  StepRecord again = symbolic_step(ins("call other"), s);
  EXPECT_TRUE(again.call_args.empty());
}

TEST(SymbolicStep, CallArgumentsStopAtFirstGap) {
  MachineState s = seeded();
  symbolic_step(ins("mov esi, 2"), s);
  symbolic_step(ins("mov edx, 3"), s);
  StepRecord r = symbolic_step(ins("call f"), s);
  EXPECT_TRUE(r.call_args.empty());
}

TEST(SymbolicStep, UnsupportedMnemonicsGetFreshVars) {
  MachineState s = seeded();
  StepRecord r = symbolic_step(ins("movzx eax, byte ptr [rdi]"), s);
  EXPECT_TRUE(r.unsupported);
  EXPECT_EQ(s.read(Reg::rax), V(6));
  EXPECT_EQ(r.operands[1].value, SymExpr::mem(V(0)));

  Instruction other = ins("frobnicate rbx, rdx");
  other.address = 0x104;  // fresh vars are memoized per definition site
  StepRecord u = symbolic_step(other, s);
  EXPECT_TRUE(u.unsupported);
  EXPECT_EQ(s.read(Reg::rbx), V(7));
  EXPECT_EQ(s.read(Reg::rdx), V(8));
}

TEST(SymbolicStep, RipRelativeUsesResolvedString) {
  Instruction i = ins("lea rdi, [rip+0x200]");
  i.resolved_string = "hello %d";
  MachineState s = seeded();
  symbolic_step(i, s);
  EXPECT_EQ(s.read(Reg::rdi), SymExpr::str("hello %d"));

  MachineState t = seeded();
  symbolic_step(ins("mov rax, qword ptr [rip+0x200]"), t);
  EXPECT_EQ(t.read(Reg::rax).kind(), SymExpr::Kind::Var);
}

TEST(Traverse, StraightLineRecordsEachInstructionOnce) {
  Function f = testutil::assemble("f", 0x10, {"mov eax, edi", "add eax, 3", "mov [rsi], eax", "ret"});
  TraversalRecord r = traverse(f, build_cfg(f));
  ASSERT_EQ(r.traces.size(), 4u);
  for (const auto& [addr, t] : r.traces) EXPECT_FALSE(t.second);
  EXPECT_EQ(r.steps, 4u);
  EXPECT_EQ(r.loops_processed, 0u);
}

TEST(Traverse, DiamondJoinUsesFirstExploredBranch) {
  Function f = testutil::assemble(
      "f", 0x10, {"cmp edi, 0", "jle L", "mov ecx, 1", "jmp J", "L: mov ecx, 2", "J: mov [rsi], ecx", "ret"});
  TraversalRecord r = traverse(f, build_cfg(f));
  EXPECT_EQ(r.traces.size(), 7u);
  const auto& store = r.traces.at(0x10 + 4 * 5);
  EXPECT_EQ(store.first.operands[0].value, N(1));  // fall-through (lower address) explored first
  EXPECT_EQ(r.steps, 7u);
}

namespace {

Function two_latch_loop() {
  return testutil::assemble("loop", 0x1000,
                            {"mov eax, edi", "L1: cmp eax, esi", "jge EXIT", "cmp eax, 5", "jg L2", "L3: mov ecx, 3",
                             "mov [rdx], ecx", "L4: add eax, 1", "jmp L1", "L2: mov [rdx+8], eax", "jmp L4",
                             "EXIT: mov edi, eax", "call report", "ret"});
}

std::uint64_t at(std::size_t index) { return 0x1000 + 4 * index; }

}  // namespace

TEST(Traverse, LoopDetectedAtHeaderRevisit) {
  Function f = two_latch_loop();
  TraversalRecord r = traverse(f, build_cfg(f));
  EXPECT_EQ(r.loops_processed, 1u);
  // Path L1-L3-L4 has a second pass, L2 does not.
  for (std::size_t i : {1, 2, 3, 4, 5, 6, 7, 8}) EXPECT_TRUE(r.traces.at(at(i)).second) << i;
  for (std::size_t i : {0, 9, 10, 11, 12, 13}) EXPECT_FALSE(r.traces.at(at(i)).second) << i;
}

TEST(LoopProcessing, CounterBecomesIterAndConstantsStay) {
  Function f = two_latch_loop();
  TraversalRecord r = traverse(f, build_cfg(f));
  const auto& cmp = r.traces.at(at(1));
  EXPECT_EQ(cmp.first.operands[0].value, V(0));
  EXPECT_EQ(to_string(cmp.second->operands[0].value), "VAR0+1");
  EXPECT_EQ(cmp.merged.operands[0].value, SymExpr::iter(V(0)));
  EXPECT_EQ(cmp.merged.operands[1].value, V(1));  // esi is loop invariant

  const auto& mov3 = r.traces.at(at(5));
  EXPECT_EQ(values(mov3.first), "3;3;");
  EXPECT_EQ(values(*mov3.second), "3;3;");
  EXPECT_EQ(values(mov3.merged), "3;3;");

  // Code after the loop sees the marked counter.
  EXPECT_EQ(r.traces.at(at(11)).merged.operands[0].value, SymExpr::iter(V(0)));
  EXPECT_EQ(r.traces.at(at(9)).merged.operands[0].value, SymExpr::iter(V(0)));
}

TEST(LoopProcessing, MemoryCellIncrementedEachIteration) {
  Function f = testutil::assemble("m", 0x10, {"L: add dword ptr [rdi], 1", "dec esi", "jnz L", "ret"});
  TraversalRecord r = traverse(f, build_cfg(f));

  // Two-pass oracle: run the body twice by hand.
  MachineState s = seeded();
  std::vector<StepRecord> p1, p2;
  for (std::size_t i = 0; i < 3; ++i) p1.push_back(symbolic_step(f.instructions[i], s));
  for (std::size_t i = 0; i < 3; ++i) p2.push_back(symbolic_step(f.instructions[i], s));

  const auto& add = r.traces.at(0x10);
  ASSERT_NE(p1[0].operands[0].value, p2[0].operands[0].value);
  EXPECT_EQ(add.merged.operands[0].value, SymExpr::iter(p1[0].operands[0].value));
  EXPECT_EQ(add.merged.operands[0].address, p1[0].operands[0].address);  // same cell both passes
  EXPECT_EQ(add.merged.operands[1].value, N(1));
  EXPECT_EQ(r.traces.at(0x14).merged.operands[0].value, SymExpr::iter(p1[1].operands[0].value));
}

TEST(LoopProcessing, CallInsideLoopKeepsItsVar) {
  Function f = testutil::assemble("c", 0x10, {"L: call next", "mov [rbx], rax", "dec esi", "jnz L", "ret"});
  TraversalRecord r = traverse(f, build_cfg(f));
  const auto& store = r.traces.at(0x14);
  EXPECT_TRUE(store.second);
  EXPECT_EQ(store.merged.operands[0].value.kind(), SymExpr::Kind::Var);
}

TEST(LoopProcessing, IrreducibleLoopIsPlainRevisit) {
  Function f = testutil::assemble(
      "irr", 0x10, {"cmp edi, 0", "je B", "A: add eax, 1", "B: add eax, 2", "cmp eax, esi", "jl A", "ret"});
  TraversalRecord r = traverse(f, build_cfg(f));
  EXPECT_EQ(r.loops_processed, 0u);
  bool noted = false;
  for (const auto& d : r.diagnostics) noted = noted || d.find("irreducible") != std::string::npos;
  EXPECT_TRUE(noted);
  EXPECT_EQ(r.traces.size(), 7u);
  for (const auto& [addr, t] : r.traces) EXPECT_FALSE(t.second);
}

TEST(Traverse, UnreachableCodeReported) {
  Function f = testutil::assemble("d", 0x10, {"jmp E", "mov eax, 1", "E: ret"});
  TraversalRecord r = traverse(f, build_cfg(f));
  EXPECT_EQ(r.traces.size(), 2u);
  EXPECT_FALSE(r.traces.count(0x14));
  ASSERT_FALSE(r.diagnostics.empty());
}

TEST(Traverse, DumpFormat) {
  Function f = two_latch_loop();
  std::string dump = dump_record(f, traverse(f, build_cfg(f)));
  EXPECT_NE(dump.find("0x1014: mov ecx, 0x3 ; 1st: 3,3 ; 2nd: 3,3\n"), std::string::npos) << dump;
  EXPECT_NE(dump.find("0x1004: cmp eax, esi ; 1st: VAR0,VAR1 ; 2nd: VAR0+1,VAR1\n"), std::string::npos) << dump;
}

namespace {

Function random_loop_function(std::mt19937_64& rng, std::size_t n) {
  static const char* kBody[] = {"add eax, 1", "mov ecx, eax", "sub edx, ecx", "mov [rdi+8], eax", "imul esi, 3",
                                "xor ebx, eax", "call helper", "cmp eax, esi", "push rax", "pop rbx"};
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < n; ++i) {
    std::string label = "L" + std::to_string(i) + ": ";
    auto roll = rng() % 10;
    std::string t = "L" + std::to_string(rng() % n);
    if (roll == 0) lines.push_back(label + "jne " + t);
    else if (roll == 1) lines.push_back(label + "jmp " + t);
    else lines.push_back(label + kBody[rng() % 10]);
  }
  lines.push_back("ret");
  return testutil::assemble("r", 0x1000, lines);
}

}  // namespace

TEST(TraverseProperty, DeterministicAndCoversReachableInstructions) {
  std::mt19937_64 rng(21);
  for (int iter = 0; iter < 200; ++iter) {
    Function f = random_loop_function(rng, 2 + rng() % 30);
    Cfg cfg = build_cfg(f);
    TraversalRecord a = traverse(f, cfg);
    TraversalRecord b = traverse(f, cfg);
    ASSERT_EQ(dump_record(f, a), dump_record(f, b));

    auto reach = reachable_blocks(cfg);
    std::size_t expected = 0;
    for (std::size_t blk = 0; blk < cfg.blocks.size(); ++blk) {
      if (!reach[blk]) continue;
      expected += cfg.blocks[blk].size();
      for (std::size_t i = cfg.blocks[blk].first; i <= cfg.blocks[blk].last; ++i) {
        ASSERT_TRUE(a.traces.count(f.instructions[i].address));
      }
    }
    ASSERT_EQ(a.traces.size(), expected);
  }
}

TEST(TraverseProperty, LoopInvariantRegisterNeverIter) {
  std::mt19937_64 rng(8);
  for (int iter = 0; iter < 100; ++iter) {
    // r12 is read but never written anywhere.
    Function f = testutil::assemble(
        "inv", 0x10,
        {"mov eax, edi", "L: add eax, r12d", "mov [rsi], r12", "cmp eax, " + std::to_string(rng() % 100), "jl L", "ret"});
    TraversalRecord r = traverse(f, build_cfg(f));
    EXPECT_EQ(r.traces.at(0x18).merged.operands[1].value.kind(), SymExpr::Kind::Var);
    EXPECT_EQ(r.traces.at(0x18).merged.operands[0].value.kind(), SymExpr::Kind::Var);
  }
}
