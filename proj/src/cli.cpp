#include "keydiff/cli.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "keydiff/listing.hpp"
#include "keydiff/match.hpp"
#include "keydiff/pipeline.hpp"

namespace keydiff {
namespace {

struct CliError {
  int code;
  std::string message;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError{kExitInput, "cannot read '" + path + "'"};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_output(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f || !(f << text)) throw CliError{kExitInput, "cannot write '" + path + "'"};
}

enum class InputKind { Listing, Objdump, Signatures };

InputKind detect(const std::string& text) {
  auto pos = text.find_first_not_of(" \t\r\n");
  if (pos == std::string::npos || text[pos] != '{') return InputKind::Objdump;
  try {
    auto doc = nlohmann::json::parse(text);
    if (doc.is_object() && doc.contains("params")) return InputKind::Signatures;
  } catch (const nlohmann::json::exception&) {
  }
  return InputKind::Listing;
}

Program load_program(const std::string& path, const std::string& format, std::ostream& err) {
  std::string text = read_file(path);
  InputKind kind = format == "listing" ? InputKind::Listing : format == "objdump" ? InputKind::Objdump : detect(text);
  try {
    if (kind == InputKind::Objdump) {
      auto result = parse_objdump(text);
      for (const auto& w : result.warnings) err << path << ": warning: " << w << "\n";
      return std::move(result.program);
    }
    if (kind == InputKind::Signatures) throw CliError{kExitInput, "'" + path + "' is a signature file, not a listing"};
    return parse_listing(text);
  } catch (const ParseError& e) {
    throw CliError{kExitInput, path + ": " + e.what()};
  }
}

struct Side {
  std::vector<SignedFunction> functions;
  SideSummary summary;
};

Side analyzed_side(const Program& program, const Config& config) {
  Side side;
  side.summary.binary = program.binary;
  side.summary.functions_total = program.functions.size();
  Program kept = filter_functions(program, config.min_blocks);
  auto analyses = analyze_program(kept, config);
  side.summary.functions_analyzed = analyses.size();
  for (const auto& a : analyses) {
    side.summary.empty_graphs += a.graph.nodes.empty();
    side.summary.instructions_executed += a.record.traces.size();
    side.summary.unsupported_instructions += a.record.unsupported;
    side.functions.push_back(SignedFunction{a.name, a.entry, a.signature});
  }
  return side;
}

Side load_side(const std::string& path, const Config& config, std::ostream& err) {
  std::string text = read_file(path);
  if (detect(text) != InputKind::Signatures) return analyzed_side(load_program(path, "auto", err), config);
  SignatureFile file;
  try {
    file = read_signature_file(text);
  } catch (const ParseError& e) {
    throw CliError{kExitInput, path + ": " + e.what()};
  } catch (const ParamsMismatch& e) {
    throw CliError{kExitParams, path + ": " + e.what()};
  }
  if (!(file.params == config.minhash())) {
    std::ostringstream msg;
    msg << path << ": signature parameters (k=" << file.params.k << ", w=" << file.params.w
        << ", seed=" << file.params.seed << ") differ from the configured ones (k=" << config.minhash_k
        << ", w=" << config.shingle_w << ", seed=" << config.master_seed << ")";
    throw CliError{kExitParams, msg.str()};
  }
  Side side;
  side.summary.from_signatures = true;
  side.summary.functions_total = file.functions.size();
  side.summary.functions_analyzed = file.functions.size();
  for (const auto& f : file.functions) side.summary.empty_graphs += f.signature.empty;
  side.functions = std::move(file.functions);
  return side;
}

void add_config_options(CLI::App& cmd, Config& config) {
  cmd.add_option("--min-blocks", config.min_blocks, "Minimum basic blocks per analyzed function")
      ->envname("KEYDIFF_MIN_BLOCKS")
      ->capture_default_str();
  cmd.add_option("--k", config.minhash_k, "MinHash slots")->envname("KEYDIFF_K")->capture_default_str();
  cmd.add_option("--shingle", config.shingle_w, "Shingle width in tokens")->envname("KEYDIFF_SHINGLE")->capture_default_str();
  cmd.add_option("--seed", config.master_seed, "Master hash seed")->envname("KEYDIFF_SEED")->capture_default_str();
  cmd.add_option("--top-n", config.top_n, "Candidates kept per query")->envname("KEYDIFF_TOP_N")->capture_default_str();
  cmd.add_option("--rule-budget", config.rule_budget, "Simplifier rule budget")
      ->envname("KEYDIFF_RULE_BUDGET")
      ->capture_default_str();
  cmd.add_option("--threads", config.threads, "Worker threads (0 = all cores)")->envname("KEYDIFF_THREADS");
}

const Function& select_function(const Program& p, const std::string& selector) {
  for (const auto& f : p.functions) {
    if (f.name && *f.name == selector) return f;
  }
  std::optional<std::uint64_t> addr;
  try {
    std::size_t used = 0;
    bool hex = selector.size() > 2 && selector[0] == '0' && (selector[1] == 'x' || selector[1] == 'X');
    std::uint64_t v = std::stoull(hex ? selector.substr(2) : selector, &used, hex ? 16 : 10);
    if (used == selector.size() - (hex ? 2 : 0)) addr = v;
  } catch (const std::exception&) {
  }
  if (addr) {
    for (const auto& f : p.functions) {
      if (f.entry == *addr) return f;
    }
  }
  std::ostringstream msg;
  msg << "no function matches '" << selector << "'; available:";
  for (const auto& f : p.functions) msg << "\n  " << f.display_name() << " (" << hex_string(f.entry) << ")";
  throw CliError{kExitSelection, msg.str()};
}

std::string inspect_stage(const Function& f, const FunctionAnalysis& a, const std::string& stage) {
  std::ostringstream out;
  if (stage == "symexec") {
    out << dump_record(f, a.record);
    for (const auto& d : a.cfg.diagnostics) out << "# " << d << "\n";
    for (const auto& d : a.record.diagnostics) out << "# " << d << "\n";
  } else if (stage == "keys") {
    for (const auto& k : a.keys) out << hex_string(k.address) << ": " << display(k.expr) << "\n";
  } else if (stage == "graph") {
    out << to_dot(a.graph, f.display_name());
  } else if (stage == "tokens") {
    for (const auto& t : a.tokens) out << t << "\n";
  } else {
    SignatureFile file;
    file.params = a.signature.params;
    file.functions.push_back(SignedFunction{a.name, a.entry, a.signature});
    out << write_signature_file(file);
  }
  return out.str();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Function similarity between two disassembled x86-64 binaries", kToolName};
  app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);
  app.require_subcommand(1);

  Config config;

  std::string ingest_input, ingest_format = "auto", ingest_output;
  auto* ingest = app.add_subcommand("ingest", "Parse disassembly into a canonical JSON listing");
  ingest->add_option("input", ingest_input, "Listing JSON or objdump -M intel text")->required();
  ingest->add_option("--format", ingest_format, "Input format")
      ->check(CLI::IsMember({"listing", "objdump", "auto"}))
      ->capture_default_str();
  ingest->add_option("-o,--output", ingest_output, "Output path (default stdout)");

  std::string diff_a, diff_b, diff_output;
  bool as_json = false, as_csv = false;
  auto* diff = app.add_subcommand("diff", "Rank target functions for every query function");
  diff->add_option("query", diff_a, "Query listing, disassembly or signature file")->required();
  diff->add_option("target", diff_b, "Target listing, disassembly or signature file")->required();
  auto* json_flag = diff->add_flag("--json", as_json, "JSON report (default)");
  diff->add_flag("--csv", as_csv, "CSV report")->excludes(json_flag);
  diff->add_option("-o,--output", diff_output, "Output path (default stdout)");
  add_config_options(*diff, config);

  std::string sign_input, sign_output;
  auto* sign = app.add_subcommand("sign", "Write MinHash signatures of the eligible functions");
  sign->add_option("input", sign_input, "Listing or disassembly")->required();
  sign->add_option("-o,--output", sign_output, "Output path (default stdout)");
  add_config_options(*sign, config);

  std::string inspect_input, inspect_function, inspect_stage_name = "keys";
  auto* inspect = app.add_subcommand("inspect", "Show an intermediate stage for one function");
  inspect->add_option("input", inspect_input, "Listing or disassembly")->required();
  inspect->add_option("--function", inspect_function, "Function name or entry address")->required();
  inspect->add_option("--stage", inspect_stage_name, "Stage to print")
      ->check(CLI::IsMember({"symexec", "keys", "graph", "tokens", "signature"}))
      ->capture_default_str();
  add_config_options(*inspect, config);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolName << " " << kToolVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    config.validate();
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitParams;
  }

  try {
    if (*ingest) {
      Program p = load_program(ingest_input, ingest_format, err);
      std::size_t instructions = 0;
      for (const auto& f : p.functions) instructions += f.instructions.size();
      std::string text = serialize_listing(p);
      std::ostream& summary = ingest_output.empty() || ingest_output == "-" ? err : out;
      write_output(ingest_output, text, out);
      summary << "functions: " << p.functions.size() << ", instructions: " << instructions << "\n";
      return kExitOk;
    }

    if (*diff) {
      Side q = load_side(diff_a, config, err);
      Side t = load_side(diff_b, config, err);
      if (q.functions.empty() || t.functions.empty()) {
        err << "error: no function with at least " << config.min_blocks << " basic blocks in "
            << (q.functions.empty() ? diff_a : diff_b) << "\n";
        return kExitEmpty;
      }
      MatchReport report = rank_all(q.functions, t.functions, config);
      report.query = q.summary;
      report.target = t.summary;
      write_output(diff_output, as_csv ? report_csv(report) : report_json(report), out);
      if (!report.precision_at_1) err << "note: no query function name occurs in the target; precision@1 undefined\n";
      return kExitOk;
    }

    if (*sign) {
      Side s = analyzed_side(load_program(sign_input, "auto", err), config);
      if (s.functions.empty()) {
        err << "error: no function with at least " << config.min_blocks << " basic blocks in " << sign_input << "\n";
        return kExitEmpty;
      }
      write_output(sign_output, write_signature_file(SignatureFile{config.minhash(), s.functions}), out);
      return kExitOk;
    }

    Program p = load_program(inspect_input, "auto", err);
    const Function& f = select_function(p, inspect_function);
    out << inspect_stage(f, analyze_function(f, config), inspect_stage_name);
    return kExitOk;
  } catch (const CliError& e) {
    err << "error: " << e.message << "\n";
    return e.code;
  } catch (const ParamsMismatch& e) {
    err << "error: " << e.what() << "\n";
    return kExitParams;
  }
}

}  // namespace keydiff
