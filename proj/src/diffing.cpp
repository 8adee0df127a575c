#include "keydiff/diffing.hpp"

#include <algorithm>
#include <limits>

#include "json.hpp"
#include "keydiff/program.hpp"

namespace keydiff {

namespace {

std::string closing(const std::string& open) { return open == "[" ? "]" : ")"; }

std::string decimal_atom(const std::string& text) {
  if (text.size() > 2 && text[0] == '0' && text[1] == 'x') return std::to_string(std::stoull(text.substr(2), nullptr, 16));
  return text;
}

}  // namespace

std::vector<std::string> tokenize_expr(const SymExpr& e) {
  std::vector<std::string> tokens;
  std::vector<std::string> opens;
  for (const auto& piece : render(e)) {
    switch (piece.type) {
      case ExprPiece::Type::Open: opens.push_back(piece.text); break;
      case ExprPiece::Type::Close: opens.pop_back(); break;
      case ExprPiece::Type::Separator: break;
      case ExprPiece::Type::Operator:
        if (piece.text == "+") break;
        [[fallthrough]];
      case ExprPiece::Type::Operand: {
        std::string t = piece.type == ExprPiece::Type::Operand ? decimal_atom(piece.text) : piece.text;
        for (auto it = opens.rbegin(); it != opens.rend(); ++it) t = *it + t + closing(*it);
        tokens.push_back(std::move(t));
        break;
      }
    }
  }
  return tokens;
}

std::vector<std::string> tokenize(const KeyExpr& key, bool while_marker) {
  std::vector<std::string> out;
  if (while_marker) out.emplace_back("WHILE");
  auto add_all = [&](const SymExpr& e, const std::string& prefix, const std::string& suffix) {
    for (auto& t : tokenize_expr(e)) out.push_back(prefix + t + suffix);
  };
  switch (key.kind) {
    case KeyKind::CallingBehavior:
      for (const auto& arg : key.operands) add_all(arg, "RET_(", ")");
      break;
    case KeyKind::ComparingManner:
      for (const auto& e : key.operands) add_all(e, "cmp ", "");
      break;
    case KeyKind::IndirectBranch:
      add_all(key.operands[0], "branch ", "");
      break;
    case KeyKind::MemoryStore:
      add_all(SymExpr::mem(key.operands[0]), "", "=");
      add_all(key.operands[1], "=", "");
      break;
  }
  return out;
}

std::vector<std::string> tokenize_sequence(const std::vector<KeyNode>& nodes) {
  std::vector<std::string> out;
  for (const auto& node : nodes) {
    auto t = tokenize(node.expr, node.while_marker);
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint64_t> slot_seeds(const MinHashParams& p) {
  std::vector<std::uint64_t> seeds(p.k);
  std::uint64_t state = p.seed;
  for (auto& s : seeds) {
    state += 0x9e3779b97f4a7c15ULL;
    s = splitmix64(state);
  }
  return seeds;
}

}  // namespace

std::set<std::string> shingles(const std::vector<std::string>& tokens, std::uint32_t w) {
  std::set<std::string> out;
  if (w == 0) throw std::invalid_argument("shingle width must be at least 1");
  if (tokens.empty()) return out;
  w = static_cast<std::uint32_t>(std::min<std::size_t>(w, tokens.size()));  // short sequences are one shingle
  for (std::size_t i = 0; i + w <= tokens.size(); ++i) {
    std::string s = tokens[i];
    for (std::size_t j = 1; j < w; ++j) s += '\x1f' + tokens[i + j];
    out.insert(std::move(s));
  }
  return out;
}

MinHashSignature signature(const std::vector<std::string>& tokens, const MinHashParams& params) {
  if (params.k == 0) throw std::invalid_argument("k must be at least 1");
  MinHashSignature sig;
  sig.params = params;
  sig.slots.assign(params.k, std::numeric_limits<std::uint64_t>::max());
  auto set = shingles(tokens, params.w);
  sig.empty = set.empty();
  auto seeds = slot_seeds(params);
  for (const auto& s : set) {
    std::uint64_t base = fnv1a(s);
    for (std::size_t i = 0; i < params.k; ++i) sig.slots[i] = std::min(sig.slots[i], splitmix64(base ^ seeds[i]));
  }
  return sig;
}

double similarity(const MinHashSignature& a, const MinHashSignature& b) {
  if (!(a.params == b.params) || a.slots.size() != b.slots.size()) {
    throw ParamsMismatch("signatures were built with different parameters");
  }
  if (a.empty && b.empty) return 1.0;
  if (a.empty || b.empty) return 0.0;
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.slots.size(); ++i) same += a.slots[i] == b.slots[i];
  return static_cast<double>(same) / static_cast<double>(a.slots.size());
}

double exact_jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

using nlohmann::json;

std::string write_signature_file(const SignatureFile& file) {
  json doc;
  doc["params"] = {{"k", file.params.k}, {"w", file.params.w}, {"seed", file.params.seed}};
  json fns = json::array();
  for (const auto& f : file.functions) {
    json j;
    j["name"] = f.name ? json(*f.name) : json(nullptr);
    j["entry"] = f.entry;
    j["slots"] = f.signature.slots;
    j["empty"] = f.signature.empty;
    fns.push_back(std::move(j));
  }
  doc["functions"] = std::move(fns);
  return doc.dump(1) + "\n";
}

SignatureFile read_signature_file(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("signature file is not valid JSON: ") + e.what());
  }
  SignatureFile file;
  try {
    const auto& p = doc.at("params");
    file.params.k = p.at("k").get<std::uint32_t>();
    file.params.w = p.at("w").get<std::uint32_t>();
    file.params.seed = p.at("seed").get<std::uint64_t>();
    for (const auto& j : doc.at("functions")) {
      SignedFunction f;
      if (auto n = j.find("name"); n != j.end() && n->is_string()) f.name = n->get<std::string>();
      f.entry = j.at("entry").get<std::uint64_t>();
      f.signature.params = file.params;
      f.signature.slots = j.at("slots").get<std::vector<std::uint64_t>>();
      f.signature.empty = j.value("empty", false);
      if (f.signature.slots.size() != file.params.k) {
        throw ParamsMismatch("function at " + hex_string(f.entry) + " has " + std::to_string(f.signature.slots.size()) +
                             " slots but k = " + std::to_string(file.params.k));
      }
      file.functions.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed signature file: ") + e.what());
  }
  return file;
}

}  // namespace keydiff
