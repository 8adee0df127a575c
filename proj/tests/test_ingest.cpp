#include <gtest/gtest.h>

#include <random>

#include "keydiff/cfg.hpp"
#include "keydiff/listing.hpp"
#include "test_util.hpp"

using namespace keydiff;

namespace {

using Edges = std::vector<std::pair<std::size_t, std::size_t>>;

std::string one_function(const std::string& instructions) {
  return R"({"binary": "b", "functions": [{"name": "f", "entry": 16, "instructions": [)" + instructions + "]}]}";
}

}  // namespace

TEST(ParseListing, MinimalDocument) {
  Program p = parse_listing(one_function(R"({"addr": 16, "mnemonic": "ret", "ops": []})"));
  ASSERT_EQ(p.functions.size(), 1u);
  EXPECT_EQ(p.functions[0].instructions.size(), 1u);
  EXPECT_EQ(p.binary, "b");
}

TEST(ParseListing, MovFields) {
  Program p = parse_listing(one_function(R"({"addr": 16, "mnemonic": "mov", "ops": ["eax", "5"]})"));
  const Instruction& i = p.functions[0].instructions[0];
  EXPECT_EQ(i.address, 0x10u);
  EXPECT_EQ(i.mnemonic, "mov");
  ASSERT_EQ(i.operands.size(), 2u);
  EXPECT_TRUE(i.operands[0].is_register());
  EXPECT_EQ(i.operands[0].reg.family, Reg::rax);
  EXPECT_EQ(i.operands[0].reg.width, 32);
  EXPECT_TRUE(i.operands[1].is_immediate());
  EXPECT_EQ(i.operands[1].imm, 5);
}

TEST(ParseListing, BadScaleCitesAddress) {
  try {
    parse_listing(one_function(R"({"addr": 16, "mnemonic": "mov", "ops": ["eax", "[rax+rbx*3]"]})"));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("0x10"), std::string::npos) << msg;
    EXPECT_NE(msg.find("scale"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'f'"), std::string::npos) << msg;
  }
}

TEST(ParseListing, DuplicateAddressRejected) {
  EXPECT_THROW(parse_listing(one_function(R"({"addr": 16, "mnemonic": "nop", "ops": []},
                                            {"addr": 16, "mnemonic": "ret", "ops": []})")),
               ParseError);
}

TEST(ParseListing, SchemaViolations) {
  EXPECT_THROW(parse_listing("[1,2]"), ParseError);
  EXPECT_THROW(parse_listing("{\"functions\": 3}"), ParseError);
  EXPECT_THROW(parse_listing(one_function(R"({"addr": 16, "ops": []})")), ParseError);
  EXPECT_THROW(parse_listing(one_function(R"({"addr": -1, "mnemonic": "ret", "ops": []})")), ParseError);
  EXPECT_THROW(parse_listing("not json"), ParseError);
}

TEST(ParseListing, UnknownFieldsIgnoredAndStringKept) {
  Program p = parse_listing(one_function(
      R"({"addr": 16, "mnemonic": "lea", "ops": ["rdi", "[rip+0x10]"], "string": "hello", "color": "red"})"));
  EXPECT_EQ(p.functions[0].instructions[0].resolved_string, "hello");
}

TEST(ParseListing, OperandSyntaxForms) {
  Program p = parse_listing(one_function(R"(
    {"addr": 16, "mnemonic": "mov", "ops": ["qword ptr [rdi]", "rax"]},
    {"addr": 20, "mnemonic": "mov", "ops": ["rcx", "[rax+rbx*4+8]"]},
    {"addr": 24, "mnemonic": "mov", "ops": ["rdx", "[rbp-0x48]"]},
    {"addr": 28, "mnemonic": "add", "ops": ["rax", "0x1f"]})"));
  const auto& ins = p.functions[0].instructions;
  EXPECT_EQ(ins[0].operands[0].mem.width, 64);
  EXPECT_EQ(ins[0].operands[0].mem.base, Reg::rdi);
  EXPECT_EQ(ins[1].operands[1].mem.index, Reg::rbx);
  EXPECT_EQ(ins[1].operands[1].mem.scale, 4);
  EXPECT_EQ(ins[1].operands[1].mem.displacement, 8);
  EXPECT_EQ(ins[2].operands[1].mem.displacement, -0x48);
  EXPECT_EQ(ins[3].operands[1].imm, 0x1f);
}

TEST(ParseListing, RoundTrip) {
  std::string text = one_function(R"(
    {"addr": 16, "mnemonic": "push", "ops": ["rbp"]},
    {"addr": 17, "mnemonic": "mov", "ops": ["dword ptr fs:[rax+rcx*8-0x10]", "ecx"]},
    {"addr": 22, "mnemonic": "lea", "ops": ["rdi", "[rip+0x2000]"], "string": "fmt %d"},
    {"addr": 29, "mnemonic": "call", "ops": ["0x401126 <printf>"]},
    {"addr": 34, "mnemonic": "jne", "ops": ["0x10"]},
    {"addr": 36, "mnemonic": "ret", "ops": []})");
  Program p = parse_listing(text);
  EXPECT_EQ(parse_listing(serialize_listing(p)), p);
}

TEST(ParseObjdump, TwoFunctions) {
  std::string text =
      "\nprog:     file format elf64-x86-64\n\n\nDisassembly of section .text:\n\n"
      "0000000000401000 <first>:\n"
      "  401000:\t55                   \tpush   rbp\n"
      "  401001:\t48 89 e5             \tmov    rbp,rsp\n"
      "  401004:\tc3                   \tret    \n\n"
      "0000000000401005 <second>:\n"
      "  401005:\t31 c0                \txor    eax,eax\n"
      "  401007:\tc3                   \tret    \n";
  auto r = parse_objdump(text);
  ASSERT_EQ(r.program.functions.size(), 2u);
  EXPECT_EQ(r.program.binary, "prog");
  EXPECT_EQ(r.program.functions[0].instructions.size(), 3u);
  EXPECT_EQ(r.program.functions[1].instructions.size(), 2u);
  EXPECT_EQ(r.program.functions[1].name, "second");
  EXPECT_EQ(r.program.functions[1].entry, 0x401005u);
}

TEST(ParseObjdump, PushLine) {
  auto r = parse_objdump("0000000000401000 <f>:\n401000: 55 \t push rbp\n");
  ASSERT_EQ(r.program.functions.size(), 1u);
  const auto& i = r.program.functions[0].instructions[0];
  EXPECT_EQ(i.address, 0x401000u);
  EXPECT_EQ(i.mnemonic, "push");
  ASSERT_EQ(i.operands.size(), 1u);
  EXPECT_EQ(i.operands[0].reg.family, Reg::rbp);
  EXPECT_EQ(i.operands[0].reg.width, 64);
}

TEST(ParseObjdump, OnlyHeadersGivesEmptyProgramWithWarning) {
  auto r = parse_objdump("\nprog:     file format elf64-x86-64\n\nDisassembly of section .text:\n");
  EXPECT_TRUE(r.program.functions.empty());
  EXPECT_FALSE(r.warnings.empty());
}

TEST(ParseObjdump, DataLinesSkippedAndOddOperandsFlagged) {
  std::string text =
      "0000000000401000 <f>:\n"
      "  401000:\t48 8d 05 f9 0e 00 00 \tlea    rax,[rip+0xef9]        # 401f00 <msg>\n"
      "  401007:\t00 00                \n"
      "  401009:\t0f 1f 80 00 00 00 00 \tnop    DWORD PTR [rax+0x0]\n"
      "  401010:\t66 0f ef c0          \tpxor   xmm0,xmm0\n"
      "  401014:\te8 e7 ff ff ff       \tcall   401000 <f>\n"
      "  401019:\tf3 c3                \trepz ret \n";
  auto r = parse_objdump(text);
  ASSERT_EQ(r.program.functions.size(), 1u);
  const auto& ins = r.program.functions[0].instructions;
  ASSERT_EQ(ins.size(), 5u);
  EXPECT_EQ(ins[0].operands[1].mem.base, Reg::rip);
  EXPECT_TRUE(ins[2].unparsed_operands);
  EXPECT_TRUE(ins[2].operands.empty());
  EXPECT_EQ(ins[3].operands[0].label.address, 0x401000u);
  EXPECT_EQ(ins[3].operands[0].label.symbol, "f");
  EXPECT_EQ(ins[4].mnemonic, "ret");
  EXPECT_GE(r.warnings.size(), 2u);
}

TEST(BuildCfg, StraightLine) {
  Function f = testutil::assemble("f", 0x10, {"mov eax, 1", "add eax, 2", "mov ecx, eax", "ret"});
  Cfg cfg = build_cfg(f);
  EXPECT_EQ(cfg.blocks.size(), 1u);
  EXPECT_TRUE(cfg.edges.empty());
}

TEST(BuildCfg, ConditionalBranch) {
  Function f = testutil::assemble("f", 0x10, {"cmp eax, 5", "jle L", "mov ecx, 1", "L: mov ecx, 0", "ret"});
  Cfg cfg = build_cfg(f);
  ASSERT_EQ(cfg.blocks.size(), 3u);
  EXPECT_EQ(cfg.edges, (Edges{{0, 1}, {0, 2}, {1, 2}}));
}

TEST(BuildCfg, SelfLoop) {
  Function f = testutil::assemble("f", 0x10, {"L: dec eax", "jnz L", "ret"});
  Cfg cfg = build_cfg(f);
  ASSERT_EQ(cfg.blocks.size(), 2u);
  EXPECT_EQ(cfg.edges, (Edges{{0, 0}, {0, 1}}));
}

TEST(BuildCfg, CallsFallThroughAndExternalTargetsExit) {
  Function f = testutil::assemble("f", 0x10, {"call 0x9000", "test eax, eax", "je 0x9999", "jmp 0x8888", "ret"});
  Cfg cfg = build_cfg(f);
  // call does not split; je ends block 0; jmp ends block 1; ret alone.
  ASSERT_EQ(cfg.blocks.size(), 3u);
  EXPECT_EQ(cfg.edges, (Edges{{0, 1}}));
  EXPECT_TRUE(cfg.diagnostics.empty());
}

TEST(BuildCfg, MisalignedTargetIsDiagnosed) {
  Function f = testutil::assemble("f", 0x10, {"jne 0x15", "nop", "ret"});
  Cfg cfg = build_cfg(f);
  EXPECT_EQ(cfg.diagnostics.size(), 1u);
  EXPECT_EQ(cfg.edges, (Edges{{0, 1}}));
}

TEST(BuildCfg, IndirectJumpHasNoEdges) {
  Function f = testutil::assemble("f", 0x10, {"mov rax, rdi", "jmp rax", "ret"});
  Cfg cfg = build_cfg(f);
  EXPECT_EQ(cfg.blocks.size(), 2u);
  EXPECT_TRUE(cfg.edges.empty());
}

namespace {

// Function with `blocks` blocks: a chain of conditional jumps to the end.
Function chain(std::size_t blocks) {
  std::vector<std::string> lines;
  for (std::size_t i = 0; i + 1 < blocks; ++i) lines.push_back("jne END");
  lines.push_back("END: ret");
  return testutil::assemble("chain" + std::to_string(blocks), 0x1000 * blocks, lines);
}

}  // namespace

TEST(FilterFunctions, Thresholds) {
  Program p;
  p.functions = {chain(4), chain(5)};
  ASSERT_EQ(build_cfg(p.functions[0]).blocks.size(), 4u);
  ASSERT_EQ(build_cfg(p.functions[1]).blocks.size(), 5u);
  Program kept = filter_functions(p);
  ASSERT_EQ(kept.functions.size(), 1u);
  EXPECT_EQ(kept.functions[0].name, "chain5");
  EXPECT_EQ(filter_functions(p, 1), p);
  EXPECT_THROW(filter_functions(p, 0), std::invalid_argument);
}

namespace {

Function random_function(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> kind(0, 9);
  std::uniform_int_distribution<std::size_t> target(0, n - 1);
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < n; ++i) {
    std::string label = "L" + std::to_string(i) + ": ";
    int k = kind(rng);
    std::string t = "L" + std::to_string(target(rng));
    if (k == 0) lines.push_back(label + "jmp " + t);
    else if (k <= 2) lines.push_back(label + "jl " + t);
    else if (k == 3) lines.push_back(label + "ret");
    else if (k == 4) lines.push_back(label + "call 0x99999");
    else lines.push_back(label + "add eax, 1");
  }
  return testutil::assemble("r", 0x4000, lines);
}

}  // namespace

TEST(BuildCfgProperty, BlocksPartitionInstructionsAndEdgesAreValid) {
  std::mt19937_64 rng(7);
  for (int iter = 0; iter < 300; ++iter) {
    std::size_t n = 1 + rng() % 40;
    Function f = random_function(rng, n);
    Cfg cfg = build_cfg(f);
    std::size_t next = 0;
    for (const auto& b : cfg.blocks) {
      ASSERT_EQ(b.first, next);
      ASSERT_LE(b.first, b.last);
      next = b.last + 1;
    }
    ASSERT_EQ(next, n);
    for (const auto& [a, b] : cfg.edges) {
      ASSERT_LT(a, cfg.blocks.size());
      ASSERT_LT(b, cfg.blocks.size());
    }
    ASSERT_EQ(cfg.block_of(0), cfg.entry);

    Function renamed = f;
    renamed.name = "something_else";
    for (auto& insn : renamed.instructions) {
      for (auto& op : insn.operands) {
        if (op.is_label()) op.label.symbol = "sym";
      }
    }
    ASSERT_EQ(build_cfg(renamed).blocks.size(), cfg.blocks.size());
  }
}

TEST(BuildCfgProperty, RoundTripRandomPrograms) {
  std::mt19937_64 rng(11);
  Program p;
  p.binary = "rand";
  for (int i = 0; i < 20; ++i) {
    Function f = random_function(rng, 1 + rng() % 30);
    f.name = "f" + std::to_string(i);
    p.functions.push_back(f);
  }
  EXPECT_EQ(parse_listing(serialize_listing(p)), p);
}

TEST(Dominators, LoopHeaderDominatesLatch) {
  Function f = testutil::assemble("f", 0x10, {"mov eax, 0", "H: cmp eax, 10", "jge X", "add eax, 1", "jmp H", "X: ret"});
  Cfg cfg = build_cfg(f);
  auto idom = immediate_dominators(cfg);
  std::size_t header = cfg.block_of(1);
  std::size_t latch = cfg.block_of(3);
  EXPECT_TRUE(dominates(idom, header, latch));
  EXPECT_FALSE(dominates(idom, latch, header));
}
