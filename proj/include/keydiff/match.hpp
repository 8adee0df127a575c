#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "keydiff/diffing.hpp"
#include "keydiff/pipeline.hpp"

namespace keydiff {

struct Candidate {
  std::size_t target = 0;  // index into the target function list
  std::optional<std::string> name;
  std::uint64_t entry = 0;
  double score = 0.0;
};

struct QueryResult {
  std::optional<std::string> name;
  std::uint64_t entry = 0;
  /// Descending by score, ties by target entry ascending; at most top_n.
  std::vector<Candidate> candidates;
  /// The query's name occurs in the target.
  bool eligible = false;
  /// Eligible and the top-1 candidate carries the query's name.
  bool correct = false;
};

/// Per-binary counts shown in reports.
struct SideSummary {
  std::string binary;
  std::size_t functions_total = 0;
  std::size_t functions_analyzed = 0;  // after the block filter
  std::size_t empty_graphs = 0;
  std::size_t instructions_executed = 0;
  std::size_t unsupported_instructions = 0;
  bool from_signatures = false;
};

struct MatchReport {
  Config config;
  SideSummary query;
  SideSummary target;
  std::vector<QueryResult> results;
  std::size_t eligible = 0;
  std::size_t correct = 0;
  /// Unset when no query is eligible.
  std::optional<double> precision_at_1;
};

/// Scores every query signature against every target signature. Throws
/// std::invalid_argument if the target is empty and ParamsMismatch if the
/// signatures are incompatible.
MatchReport rank_all(const std::vector<SignedFunction>& query, const std::vector<SignedFunction>& target,
                     const Config& config);

/// Ratio of eligible queries whose top-1 candidate has the same name, or
/// nullopt when none is eligible.
std::optional<double> precision_at_1(const MatchReport& report);

std::string report_json(const MatchReport& report);
std::string report_csv(const MatchReport& report);

}  // namespace keydiff
