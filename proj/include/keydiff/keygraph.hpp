#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "keydiff/cfg.hpp"
#include "keydiff/keyexpr.hpp"

namespace keydiff {

struct KeyNode {
  std::uint64_t address = 0;
  KeyExpr expr;
  bool while_marker = false;
};

/// Nodes are kept in address order, so node ids compare like addresses.
struct KeySemGraph {
  std::vector<KeyNode> nodes;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // sorted, unique
  std::vector<std::pair<std::size_t, std::size_t>> removed_back_edges;
  /// Key nodes reachable from the function entry without crossing another
  /// key instruction.
  std::vector<std::size_t> entry_nodes;

  std::vector<std::size_t> successors(std::size_t node) const;
};

/// Edge a -> b iff some CFG path leads from key instruction a to key
/// instruction b through no other key instruction. Cycles are kept.
KeySemGraph build_key_semantics_graph(const Function& f, const Cfg& cfg, std::vector<KeyInstruction> keys);

/// DFS from the entry nodes, then from any unvisited node by address,
/// children in address order. Edges to a node on the DFS stack are removed
/// and their target gets the WHILE marker.
KeySemGraph break_loops(KeySemGraph g);

/// Kahn's algorithm taking the lowest-address ready node first. Throws
/// std::logic_error if the graph has a cycle.
std::vector<std::size_t> topo_order(const KeySemGraph& g);

std::vector<KeyNode> topo_serialize(const KeySemGraph& g);

/// Graphviz text; removed back edges are dashed.
std::string to_dot(const KeySemGraph& g, const std::string& name);

}  // namespace keydiff
