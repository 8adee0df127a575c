#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "keydiff/program.hpp"

namespace keydiff {

struct BasicBlock {
  std::size_t first = 0;  // instruction index, inclusive
  std::size_t last = 0;   // instruction index, inclusive

  std::size_t size() const { return last - first + 1; }
  friend bool operator==(const BasicBlock&, const BasicBlock&) = default;
};

/// Basic-block graph of one function. Block ids follow address order and
/// block 0 holds the entry instruction.
struct Cfg {
  std::vector<BasicBlock> blocks;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // sorted, unique
  std::size_t entry = 0;
  /// Branch targets inside the function's address range that do not start
  /// an instruction.
  std::vector<std::string> diagnostics;

  std::vector<std::size_t> successors(std::size_t block) const;
  /// Block containing the given instruction index.
  std::size_t block_of(std::size_t instruction) const;
};

/// Leaders are the entry, in-function branch targets, and instructions
/// following a branch or return. Conditional branches get target and
/// fall-through edges; calls fall through; targets outside the function are
/// exits.
Cfg build_cfg(const Function& f);

/// Immediate dominators over reachable blocks (entry maps to itself,
/// unreachable blocks to nullopt).
std::vector<std::optional<std::size_t>> immediate_dominators(const Cfg& cfg);

bool dominates(const std::vector<std::optional<std::size_t>>& idom, std::size_t a, std::size_t b);

/// Blocks reachable from the entry, as a membership mask.
std::vector<bool> reachable_blocks(const Cfg& cfg);

/// Keeps the functions whose CFG has at least min_blocks blocks.
Program filter_functions(const Program& p, std::size_t min_blocks = 5);

/// In-function target of a direct jump, if it lands on an instruction.
std::optional<std::size_t> jump_target_index(const Function& f, const Instruction& insn);

/// Instruction-level control-flow successors, ascending by index.
std::vector<std::size_t> instruction_successors(const Function& f, std::size_t index);

}  // namespace keydiff
