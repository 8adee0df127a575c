#include "keydiff/match.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace keydiff {

MatchReport rank_all(const std::vector<SignedFunction>& query, const std::vector<SignedFunction>& target,
                     const Config& config) {
  if (target.empty()) throw std::invalid_argument("target program has no functions to rank against");
  MatchReport report;
  report.config = config;
  report.results.resize(query.size());

  std::set<std::string> target_names;
  for (const auto& t : target) {
    if (t.name) target_names.insert(*t.name);
  }

  parallel_for(query.size(), config.threads, [&](std::size_t qi) {
    const auto& q = query[qi];
    QueryResult r;
    r.name = q.name;
    r.entry = q.entry;
    std::vector<Candidate> all;
    all.reserve(target.size());
    for (std::size_t ti = 0; ti < target.size(); ++ti) {
      all.push_back(Candidate{ti, target[ti].name, target[ti].entry, similarity(q.signature, target[ti].signature)});
    }
    std::stable_sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.entry < b.entry;
    });
    if (all.size() > config.top_n) all.resize(config.top_n);
    r.candidates = std::move(all);
    r.eligible = q.name && target_names.count(*q.name);
    r.correct = r.eligible && r.candidates.front().name == q.name;
    report.results[qi] = std::move(r);
  });

  for (const auto& r : report.results) {
    report.eligible += r.eligible;
    report.correct += r.correct;
  }
  report.precision_at_1 = precision_at_1(report);
  return report;
}

std::optional<double> precision_at_1(const MatchReport& report) {
  std::size_t eligible = 0;
  std::size_t correct = 0;
  for (const auto& r : report.results) {
    eligible += r.eligible;
    correct += r.correct;
  }
  if (eligible == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(eligible);
}

namespace {

using nlohmann::ordered_json;

ordered_json config_json(const Config& c) {
  return ordered_json{{"min_blocks", c.min_blocks}, {"k", c.minhash_k},   {"shingle", c.shingle_w},
                      {"seed", c.master_seed},      {"top_n", c.top_n},   {"rule_budget", c.rule_budget}};
}

ordered_json side_json(const SideSummary& s) {
  return ordered_json{{"binary", s.binary},
                      {"from_signatures", s.from_signatures},
                      {"functions_total", s.functions_total},
                      {"functions_analyzed", s.functions_analyzed},
                      {"empty_graphs", s.empty_graphs},
                      {"instructions_executed", s.instructions_executed},
                      {"unsupported_instructions", s.unsupported_instructions}};
}

ordered_json name_json(const std::optional<std::string>& name) { return name ? ordered_json(*name) : ordered_json(nullptr); }

std::string label(const std::optional<std::string>& name, std::uint64_t entry) {
  return name ? *name : hex_string(entry);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string report_json(const MatchReport& report) {
  ordered_json doc;
  doc["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
  doc["config"] = config_json(report.config);
  doc["query"] = side_json(report.query);
  doc["target"] = side_json(report.target);
  doc["summary"] = {{"queries", report.results.size()},
                    {"eligible_queries", report.eligible},
                    {"correct_top1", report.correct},
                    {"precision_at_1", report.precision_at_1 ? ordered_json(*report.precision_at_1) : ordered_json(nullptr)}};
  ordered_json results = ordered_json::array();
  for (const auto& r : report.results) {
    ordered_json cands = ordered_json::array();
    for (std::size_t i = 0; i < r.candidates.size(); ++i) {
      const auto& c = r.candidates[i];
      cands.push_back({{"rank", i + 1}, {"name", name_json(c.name)}, {"entry", c.entry}, {"score", c.score}});
    }
    results.push_back({{"name", name_json(r.name)},
                       {"entry", r.entry},
                       {"eligible", r.eligible},
                       {"correct", r.correct},
                       {"candidates", std::move(cands)}});
  }
  doc["results"] = std::move(results);
  return doc.dump(2) + "\n";
}

std::string report_csv(const MatchReport& report) {
  std::ostringstream out;
  const Config& c = report.config;
  out << "# " << kToolName << " " << kToolVersion << " min_blocks=" << c.min_blocks << " k=" << c.minhash_k
      << " shingle=" << c.shingle_w << " seed=" << c.master_seed << " top_n=" << c.top_n
      << " rule_budget=" << c.rule_budget << "\n";
  out << "query,target,score,rank,correct\n";
  for (const auto& r : report.results) {
    for (std::size_t i = 0; i < r.candidates.size(); ++i) {
      const auto& cand = r.candidates[i];
      bool same = r.name && cand.name == r.name;
      out << csv_field(label(r.name, r.entry)) << "," << csv_field(label(cand.name, cand.entry)) << ","
          << fixed6(cand.score) << "," << (i + 1) << "," << (same ? 1 : 0) << "\n";
    }
  }
  return out.str();
}

}  // namespace keydiff
