#include "keydiff/cfg.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace keydiff {
namespace {

std::optional<std::size_t> index_of(const Function& f, std::uint64_t addr) {
  auto it = std::lower_bound(f.instructions.begin(), f.instructions.end(), addr,
                             [](const Instruction& i, std::uint64_t a) { return i.address < a; });
  if (it == f.instructions.end() || it->address != addr) return std::nullopt;
  return static_cast<std::size_t>(it - f.instructions.begin());
}

std::optional<std::uint64_t> direct_target(const Instruction& insn) {
  if (insn.operands.size() != 1 || !insn.operands[0].is_label()) return std::nullopt;
  return insn.operands[0].label.address;
}

}  // namespace

std::optional<std::size_t> jump_target_index(const Function& f, const Instruction& insn) {
  if (!is_jump(insn.mnemonic)) return std::nullopt;
  auto target = direct_target(insn);
  if (!target) return std::nullopt;
  return index_of(f, *target);
}

std::vector<std::size_t> instruction_successors(const Function& f, std::size_t i) {
  const auto& insn = f.instructions[i];
  std::vector<std::size_t> out;
  bool has_next = i + 1 < f.instructions.size();
  if (is_jump(insn.mnemonic)) {
    if (auto t = jump_target_index(f, insn)) out.push_back(*t);
    if (is_conditional_branch(insn.mnemonic) && has_next) out.push_back(i + 1);
  } else if (!ends_flow(insn.mnemonic) && has_next) {
    out.push_back(i + 1);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::size_t> Cfg::successors(std::size_t block) const {
  std::vector<std::size_t> out;
  auto it = std::lower_bound(edges.begin(), edges.end(), std::make_pair(block, std::size_t{0}));
  for (; it != edges.end() && it->first == block; ++it) out.push_back(it->second);
  return out;
}

std::size_t Cfg::block_of(std::size_t instruction) const {
  auto it = std::upper_bound(blocks.begin(), blocks.end(), instruction,
                             [](std::size_t i, const BasicBlock& b) { return i < b.first; });
  return static_cast<std::size_t>(it - blocks.begin()) - 1;
}

Cfg build_cfg(const Function& f) {
  Cfg cfg;
  const auto& insns = f.instructions;
  const std::size_t n = insns.size();
  if (n == 0) return cfg;

  const std::uint64_t lo = insns.front().address;
  const std::uint64_t hi = insns.back().address;

  std::set<std::size_t> leaders{0};
  for (std::size_t i = 0; i < n; ++i) {
    const auto& insn = insns[i];
    bool branch = is_jump(insn.mnemonic);
    if (branch) {
      if (auto target = direct_target(insn)) {
        if (auto t = index_of(f, *target)) {
          leaders.insert(*t);
        } else if (*target >= lo && *target <= hi) {
          cfg.diagnostics.push_back("branch at " + hex_string(insn.address) + " targets " + hex_string(*target) +
                                    ", which is not an instruction boundary; treated as external");
        }
      }
    }
    if ((branch || ends_flow(insn.mnemonic)) && i + 1 < n) leaders.insert(i + 1);
  }

  std::vector<std::size_t> starts(leaders.begin(), leaders.end());
  for (std::size_t k = 0; k < starts.size(); ++k) {
    std::size_t last = k + 1 < starts.size() ? starts[k + 1] - 1 : n - 1;
    cfg.blocks.push_back(BasicBlock{starts[k], last});
  }

  for (std::size_t b = 0; b < cfg.blocks.size(); ++b) {
    const auto& tail = insns[cfg.blocks[b].last];
    bool has_next = b + 1 < cfg.blocks.size();
    if (is_jump(tail.mnemonic)) {
      if (auto t = jump_target_index(f, tail)) cfg.edges.emplace_back(b, cfg.block_of(*t));
      if (is_conditional_branch(tail.mnemonic) && has_next) cfg.edges.emplace_back(b, b + 1);
    } else if (!ends_flow(tail.mnemonic) && has_next) {
      cfg.edges.emplace_back(b, b + 1);
    }
  }
  std::sort(cfg.edges.begin(), cfg.edges.end());
  cfg.edges.erase(std::unique(cfg.edges.begin(), cfg.edges.end()), cfg.edges.end());
  cfg.entry = 0;
  return cfg;
}

std::vector<bool> reachable_blocks(const Cfg& cfg) {
  std::vector<bool> seen(cfg.blocks.size(), false);
  if (cfg.blocks.empty()) return seen;
  std::vector<std::size_t> work{cfg.entry};
  seen[cfg.entry] = true;
  while (!work.empty()) {
    std::size_t b = work.back();
    work.pop_back();
    for (std::size_t s : cfg.successors(b)) {
      if (!seen[s]) {
        seen[s] = true;
        work.push_back(s);
      }
    }
  }
  return seen;
}

std::vector<std::optional<std::size_t>> immediate_dominators(const Cfg& cfg) {
  const std::size_t n = cfg.blocks.size();
  std::vector<std::optional<std::size_t>> idom(n);
  if (n == 0) return idom;

  // Reverse postorder by iterative DFS.
  std::vector<std::size_t> postorder;
  std::vector<int> state(n, 0);
  std::vector<std::pair<std::size_t, std::size_t>> stack{{cfg.entry, 0}};
  state[cfg.entry] = 1;
  while (!stack.empty()) {
    auto& [b, next] = stack.back();
    auto succ = cfg.successors(b);
    if (next < succ.size()) {
      std::size_t s = succ[next++];
      if (state[s] == 0) {
        state[s] = 1;
        stack.emplace_back(s, 0);
      }
    } else {
      postorder.push_back(b);
      stack.pop_back();
    }
  }
  std::vector<std::size_t> order(n, 0);
  for (std::size_t i = 0; i < postorder.size(); ++i) order[postorder[i]] = i;

  std::vector<std::vector<std::size_t>> preds(n);
  for (const auto& [a, b] : cfg.edges) preds[b].push_back(a);

  idom[cfg.entry] = cfg.entry;
  auto intersect = [&](std::size_t a, std::size_t b) {
    while (a != b) {
      while (order[a] < order[b]) a = *idom[a];
      while (order[b] < order[a]) b = *idom[b];
    }
    return a;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto it = postorder.rbegin(); it != postorder.rend(); ++it) {
      std::size_t b = *it;
      if (b == cfg.entry) continue;
      std::optional<std::size_t> candidate;
      for (std::size_t p : preds[b]) {
        if (!idom[p]) continue;
        candidate = candidate ? intersect(*candidate, p) : p;
      }
      if (candidate && idom[b] != candidate) {
        idom[b] = candidate;
        changed = true;
      }
    }
  }
  return idom;
}

bool dominates(const std::vector<std::optional<std::size_t>>& idom, std::size_t a, std::size_t b) {
  if (!idom[b]) return false;
  while (true) {
    if (a == b) return true;
    std::size_t up = *idom[b];
    if (up == b) return false;
    b = up;
  }
}

Program filter_functions(const Program& p, std::size_t min_blocks) {
  if (min_blocks == 0) throw std::invalid_argument("min_blocks must be at least 1");
  Program out;
  out.binary = p.binary;
  for (const auto& f : p.functions) {
    if (build_cfg(f).blocks.size() >= min_blocks) out.functions.push_back(f);
  }
  return out;
}

}  // namespace keydiff
