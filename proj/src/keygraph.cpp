#include "keydiff/keygraph.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <queue>
#include <sstream>
#include <stdexcept>

namespace keydiff {

std::vector<std::size_t> KeySemGraph::successors(std::size_t node) const {
  std::vector<std::size_t> out;
  auto it = std::lower_bound(edges.begin(), edges.end(), std::make_pair(node, std::size_t{0}));
  for (; it != edges.end() && it->first == node; ++it) out.push_back(it->second);
  return out;
}

KeySemGraph build_key_semantics_graph(const Function& f, const Cfg& /*cfg*/, std::vector<KeyInstruction> keys) {
  std::sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) { return a.address < b.address; });
  KeySemGraph g;
  std::map<std::uint64_t, std::size_t> node_at;
  for (auto& k : keys) {
    node_at.emplace(k.address, g.nodes.size());
    g.nodes.push_back(KeyNode{k.address, std::move(k.expr), false});
  }

  const std::size_t n = f.instructions.size();
  std::vector<std::ptrdiff_t> key_of(n, -1);
  std::vector<std::size_t> index_of_node(g.nodes.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    auto it = node_at.find(f.instructions[i].address);
    if (it != node_at.end()) {
      key_of[i] = static_cast<std::ptrdiff_t>(it->second);
      index_of_node[it->second] = i;
    }
  }

  // Key nodes first met from the given instructions, without passing
  // through another key instruction.
  auto frontier = [&](const std::vector<std::size_t>& starts) {
    std::vector<std::size_t> found;
    std::vector<bool> seen(n, false);
    std::deque<std::size_t> work;
    for (std::size_t s : starts) {
      if (!seen[s]) {
        seen[s] = true;
        work.push_back(s);
      }
    }
    while (!work.empty()) {
      std::size_t i = work.front();
      work.pop_front();
      if (key_of[i] >= 0) {
        found.push_back(static_cast<std::size_t>(key_of[i]));
        continue;
      }
      for (std::size_t s : instruction_successors(f, i)) {
        if (!seen[s]) {
          seen[s] = true;
          work.push_back(s);
        }
      }
    }
    std::sort(found.begin(), found.end());
    return found;
  };

  if (n > 0) g.entry_nodes = frontier({0});
  for (std::size_t v = 0; v < g.nodes.size(); ++v) {
    for (std::size_t w : frontier(instruction_successors(f, index_of_node[v]))) g.edges.emplace_back(v, w);
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  return g;
}

KeySemGraph break_loops(KeySemGraph g) {
  const std::size_t n = g.nodes.size();
  std::vector<int> state(n, 0);  // 0 new, 1 on stack, 2 done
  std::vector<std::pair<std::size_t, std::size_t>> back;

  auto dfs = [&](std::size_t root) {
    if (state[root] != 0) return;
    std::vector<std::pair<std::size_t, std::vector<std::size_t>>> stack;
    std::vector<std::size_t> next;
    state[root] = 1;
    stack.emplace_back(root, g.successors(root));
    next.push_back(0);
    while (!stack.empty()) {
      auto& [v, succ] = stack.back();
      std::size_t& k = next.back();
      if (k < succ.size()) {
        std::size_t w = succ[k++];
        if (state[w] == 1) {
          back.emplace_back(v, w);
        } else if (state[w] == 0) {
          state[w] = 1;
          auto ws = g.successors(w);
          stack.emplace_back(w, std::move(ws));
          next.push_back(0);
        }
      } else {
        state[v] = 2;
        stack.pop_back();
        next.pop_back();
      }
    }
  };

  for (std::size_t r : g.entry_nodes) dfs(r);
  for (std::size_t v = 0; v < n; ++v) dfs(v);

  std::sort(back.begin(), back.end());
  for (const auto& e : back) {
    g.edges.erase(std::lower_bound(g.edges.begin(), g.edges.end(), e));
    g.nodes[e.second].while_marker = true;
    g.removed_back_edges.push_back(e);
  }
  std::sort(g.removed_back_edges.begin(), g.removed_back_edges.end());
  return g;
}

std::vector<std::size_t> topo_order(const KeySemGraph& g) {
  const std::size_t n = g.nodes.size();
  std::vector<std::size_t> indegree(n, 0);
  for (const auto& e : g.edges) ++indegree[e.second];
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t v = 0; v < n; ++v) {
    if (indegree[v] == 0) ready.push(v);
  }
  std::vector<std::size_t> order;
  order.reserve(n);
  while (!ready.empty()) {
    std::size_t v = ready.top();
    ready.pop();
    order.push_back(v);
    for (std::size_t w : g.successors(v)) {
      if (--indegree[w] == 0) ready.push(w);
    }
  }
  if (order.size() != n) throw std::logic_error("key-semantics graph has a cycle; break_loops was not applied");
  return order;
}

std::vector<KeyNode> topo_serialize(const KeySemGraph& g) {
  std::vector<KeyNode> out;
  for (std::size_t v : topo_order(g)) out.push_back(g.nodes[v]);
  return out;
}

namespace {

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace

std::string to_dot(const KeySemGraph& g, const std::string& name) {
  std::ostringstream out;
  out << "digraph \"" << dot_escape(name) << "\" {\n";
  out << "  node [shape=box];\n";
  for (std::size_t v = 0; v < g.nodes.size(); ++v) {
    std::string label = hex_string(g.nodes[v].address) + ": ";
    if (g.nodes[v].while_marker) label += "WHILE ";
    label += display(g.nodes[v].expr);
    out << "  n" << v << " [label=\"" << dot_escape(label) << "\"];\n";
  }
  for (const auto& [a, b] : g.edges) out << "  n" << a << " -> n" << b << ";\n";
  for (const auto& [a, b] : g.removed_back_edges) out << "  n" << a << " -> n" << b << " [style=dashed];\n";
  out << "}\n";
  return out.str();
}

}  // namespace keydiff
