#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "keydiff/cfg.hpp"
#include "keydiff/diffing.hpp"
#include "keydiff/keygraph.hpp"
#include "keydiff/symexec.hpp"

namespace keydiff {

inline constexpr const char* kToolName = "keydiff";
inline constexpr const char* kToolVersion = "0.1.0";

struct Config {
  std::size_t min_blocks = 5;
  std::uint32_t minhash_k = 128;
  std::uint32_t shingle_w = 1;
  std::uint64_t master_seed = 0;
  std::size_t top_n = 10;
  std::size_t rule_budget = kDefaultRuleBudget;
  /// 0 picks the hardware concurrency. Never affects output.
  unsigned threads = 0;

  MinHashParams minhash() const { return MinHashParams{minhash_k, shingle_w, master_seed}; }
  /// Throws std::invalid_argument naming the first non-positive field.
  void validate() const;
};

struct FunctionAnalysis {
  std::optional<std::string> name;
  std::uint64_t entry = 0;
  Cfg cfg;
  TraversalRecord record;
  std::vector<KeyInstruction> keys;
  KeySemGraph graph;  // loops broken
  std::vector<KeyNode> serialized;
  std::vector<std::string> tokens;
  MinHashSignature signature;
};

FunctionAnalysis analyze_function(const Function& f, const Config& config);

/// Analyzes every function (no filtering), results in input order.
std::vector<FunctionAnalysis> analyze_program(const Program& p, const Config& config);

/// Runs body(i) for i in [0, n) on up to `threads` workers. The first
/// exception thrown by any call is rethrown after all workers finish.
template <typename Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> workers;
    for (unsigned t = 0; t < threads; ++t) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            body(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace keydiff
