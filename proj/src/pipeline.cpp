#include "keydiff/pipeline.hpp"

#include <stdexcept>

namespace keydiff {

void Config::validate() const {
  auto require = [](bool ok, const char* field) {
    if (!ok) throw std::invalid_argument(std::string(field) + " must be positive");
  };
  require(min_blocks > 0, "min_blocks");
  require(minhash_k > 0, "k");
  require(shingle_w > 0, "shingle");
  require(top_n > 0, "top_n");
  require(rule_budget > 0, "rule_budget");
}

FunctionAnalysis analyze_function(const Function& f, const Config& config) {
  FunctionAnalysis a;
  a.name = f.name;
  a.entry = f.entry;
  a.cfg = build_cfg(f);
  a.record = traverse(f, a.cfg, TraversalOptions{config.rule_budget});
  a.keys = extract_keys(f, a.record, config.rule_budget);
  a.graph = break_loops(build_key_semantics_graph(f, a.cfg, a.keys));
  a.serialized = topo_serialize(a.graph);
  a.tokens = tokenize_sequence(a.serialized);
  a.signature = signature(a.tokens, config.minhash());
  return a;
}

std::vector<FunctionAnalysis> analyze_program(const Program& p, const Config& config) {
  std::vector<FunctionAnalysis> out(p.functions.size());
  parallel_for(p.functions.size(), config.threads, [&](std::size_t i) { out[i] = analyze_function(p.functions[i], config); });
  return out;
}

}  // namespace keydiff
