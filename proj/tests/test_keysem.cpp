#include <gtest/gtest.h>

#include <random>

#include "keydiff/keyexpr.hpp"
#include "test_util.hpp"

using namespace keydiff;

namespace {

Instruction ins(const std::string& text) { return testutil::assemble("t", 0x100, {text}).instructions[0]; }

std::vector<std::string> displays(const Function& f) {
  std::vector<std::string> out;
  for (const auto& k : extract_keys(f, traverse(f, build_cfg(f)))) out.push_back(display(k.expr));
  return out;
}

}  // namespace

TEST(Classify, Kinds) {
  EXPECT_EQ(classify(ins("call foo")), KeyKind::CallingBehavior);
  EXPECT_EQ(classify(ins("call rax")), KeyKind::CallingBehavior);
  EXPECT_EQ(classify(ins("call qword ptr [rbx+8]")), KeyKind::CallingBehavior);
  EXPECT_EQ(classify(ins("cmp eax, 5")), KeyKind::ComparingManner);
  EXPECT_EQ(classify(ins("test eax, eax")), KeyKind::ComparingManner);
  EXPECT_EQ(classify(ins("jmp rax")), KeyKind::IndirectBranch);
  EXPECT_EQ(classify(ins("jmp qword ptr [rax*8+0x4000]")), KeyKind::IndirectBranch);
  EXPECT_EQ(classify(ins("mov dword ptr [rdi], eax")), KeyKind::MemoryStore);
  EXPECT_EQ(classify(ins("add dword ptr [rdi], 1")), KeyKind::MemoryStore);
}

TEST(Classify, NonKeys) {
  for (const char* t : {"jmp 0x200", "jne 0x200", "mov eax, dword ptr [rdi]", "lea rax, [rdi+4]", "ret", "push rax",
                        "add eax, 1", "nop"}) {
    EXPECT_FALSE(classify(ins(t))) << t;
  }
  EXPECT_EQ(classify(ins("cmp dword ptr [rdi], 1")), KeyKind::ComparingManner);
}

TEST(Translate, CompareWithConstant) {
  Function f = testutil::assemble("f", 0x10, {"mov eax, edi", "cmp eax, 5", "ret"});
  EXPECT_EQ(displays(f), std::vector<std::string>{"VAR0 cmp 5"});
}

TEST(Translate, CallArguments) {
  Function f = testutil::assemble("f", 0x10, {"mov ecx, 1", "mov esi, 9", "mov edi, ecx", "call subFunc", "ret"});
  auto d = displays(f);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0], "RET_subFunc(1, 9)");
}

TEST(Translate, StoreToStackSlot) {
  Function f = testutil::assemble("f", 0x10, {"mov dword ptr [rbp-0x48], edx", "ret"});
  EXPECT_EQ(displays(f), std::vector<std::string>{"[VAR6-0x48] = VAR2"});
}

TEST(Translate, IndirectBranchThroughTable) {
  Function f = testutil::assemble("f", 0x10, {"mov eax, edi", "jmp qword ptr [rax*8+0x4000]"});
  EXPECT_EQ(displays(f), std::vector<std::string>{"branch [8*VAR0+0x4000]"});
}

TEST(Translate, StoreOperandsAreSimplified) {
  Function f = testutil::assemble("f", 0x10, {"lea rax, [rdi+8]", "sub rax, 8", "mov ecx, esi", "xor ecx, 0",
                                              "mov dword ptr [rax], ecx", "ret"});
  EXPECT_EQ(displays(f), std::vector<std::string>{"[VAR0] = VAR1"});
}

TEST(Translate, UnexecutedInstructionThrows) {
  Function f = testutil::assemble("f", 0x10, {"jmp E", "cmp eax, 1", "E: ret"});
  TraversalRecord r = traverse(f, build_cfg(f));
  EXPECT_THROW(translate(f.instructions[1], KeyKind::ComparingManner, r), std::logic_error);
  EXPECT_TRUE(extract_keys(f, r).empty());
}

TEST(Display, Formats) {
  KeyExpr call{KeyKind::CallingBehavior, "puts", {SymExpr::str("hi")}};
  EXPECT_EQ(display(call), "RET_puts(\"hi\")");
  KeyExpr none{KeyKind::CallingBehavior, "", {}};
  EXPECT_EQ(display(none).substr(0, 4), "RET_");
  EXPECT_EQ(display(none).substr(display(none).size() - 2), "()");
  KeyExpr br{KeyKind::IndirectBranch, "", {SymExpr::var(3)}};
  EXPECT_EQ(display(br), "branch VAR3");
}

TEST(KeysProperty, EveryExecutedKeyInstructionTranslates) {
  static const char* kBody[] = {"add eax, 1",        "mov ecx, eax",  "mov dword ptr [rdi+8], eax", "call helper",
                                "cmp eax, esi",      "test ecx, ecx", "imul edx, ecx, 3",          "push rax",
                                "add qword ptr [rsp+8], rcx", "movzx eax, byte ptr [rsi]"};
  std::mt19937_64 rng(4);
  for (int iter = 0; iter < 200; ++iter) {
    std::size_t n = 2 + rng() % 25;
    std::vector<std::string> lines;
    for (std::size_t i = 0; i < n; ++i) {
      std::string label = "L" + std::to_string(i) + ": ";
      auto roll = rng() % 10;
      if (roll == 0) lines.push_back(label + "jle L" + std::to_string(rng() % n));
      else lines.push_back(label + kBody[rng() % 10]);
    }
    lines.push_back("ret");
    Function f = testutil::assemble("r", 0x1000, lines);
    TraversalRecord r = traverse(f, build_cfg(f));
    std::vector<KeyInstruction> keys;
    ASSERT_NO_THROW(keys = extract_keys(f, r));
    std::size_t expected = 0;
    for (const auto& insn : f.instructions) expected += classify(insn) && r.traces.count(insn.address);
    ASSERT_EQ(keys.size(), expected);
    for (std::size_t i = 1; i < keys.size(); ++i) ASSERT_LT(keys[i - 1].address, keys[i].address);
  }
}
