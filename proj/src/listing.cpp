#include "keydiff/listing.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <optional>
#include <sstream>

#include "json.hpp"

namespace keydiff {

using nlohmann::json;

namespace {

std::string describe(const json& fn, std::size_t index) {
  auto it = fn.find("name");
  if (it != fn.end() && it->is_string()) return "function '" + it->get<std::string>() + "'";
  return "function #" + std::to_string(index);
}

std::uint64_t require_uint(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + ": missing \"" + key + "\"");
  if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<std::int64_t>() >= 0)) {
    throw ParseError(where + ": \"" + key + "\" must be an unsigned integer");
  }
  return it->get<std::uint64_t>();
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

Instruction parse_instruction(const json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": instruction is not an object");
  Instruction insn;
  insn.address = require_uint(j, "addr", where);
  std::string at = where + " at " + hex_string(insn.address);

  auto mn = j.find("mnemonic");
  if (mn == j.end() || !mn->is_string() || mn->get<std::string>().empty()) {
    throw ParseError(at + ": missing or empty \"mnemonic\"");
  }
  insn.mnemonic = lower(mn->get<std::string>());

  auto ops = j.find("ops");
  if (ops == j.end() || !ops->is_array()) throw ParseError(at + ": \"ops\" must be an array of strings");
  for (const auto& op : *ops) {
    if (!op.is_string()) throw ParseError(at + ": \"ops\" must be an array of strings");
    try {
      insn.operands.push_back(parse_operand(op.get<std::string>(), insn.mnemonic));
    } catch (const ParseError& e) {
      throw ParseError(at + ": " + e.what());
    }
  }

  if (auto s = j.find("string"); s != j.end() && !s->is_null()) {
    if (!s->is_string()) throw ParseError(at + ": \"string\" must be a string");
    insn.resolved_string = s->get<std::string>();
  }
  if (auto u = j.find("unparsed"); u != j.end() && u->is_boolean()) insn.unparsed_operands = u->get<bool>();
  if (auto r = j.find("raw"); r != j.end() && r->is_string()) {
    insn.raw_text = r->get<std::string>();
  } else {
    insn.raw_text = to_string(insn);
  }
  return insn;
}

Function parse_function(const json& j, std::size_t index) {
  if (!j.is_object()) throw ParseError("function #" + std::to_string(index) + " is not an object");
  std::string where = describe(j, index);
  Function fn;
  if (auto n = j.find("name"); n != j.end() && !n->is_null()) {
    if (!n->is_string()) throw ParseError(where + ": \"name\" must be a string");
    fn.name = n->get<std::string>();
  }
  fn.entry = require_uint(j, "entry", where);

  auto insns = j.find("instructions");
  if (insns == j.end() || !insns->is_array()) throw ParseError(where + ": \"instructions\" must be an array");
  for (const auto& i : *insns) fn.instructions.push_back(parse_instruction(i, where));
  if (fn.instructions.empty()) throw ParseError(where + ": no instructions");

  std::stable_sort(fn.instructions.begin(), fn.instructions.end(),
                   [](const Instruction& a, const Instruction& b) { return a.address < b.address; });
  for (std::size_t i = 1; i < fn.instructions.size(); ++i) {
    if (fn.instructions[i].address == fn.instructions[i - 1].address) {
      throw ParseError(where + ": duplicate instruction address " + hex_string(fn.instructions[i].address));
    }
  }
  if (fn.instructions.front().address != fn.entry) {
    throw ParseError(where + ": entry " + hex_string(fn.entry) + " is not the first instruction address " +
                     hex_string(fn.instructions.front().address));
  }
  return fn;
}

}  // namespace

Program parse_listing(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("listing is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("listing must be a JSON object");

  Program program;
  if (auto b = doc.find("binary"); b != doc.end() && !b->is_null()) {
    if (!b->is_string()) throw ParseError("\"binary\" must be a string");
    program.binary = b->get<std::string>();
  }
  auto fns = doc.find("functions");
  if (fns == doc.end() || !fns->is_array()) throw ParseError("listing has no \"functions\" array");
  for (std::size_t i = 0; i < fns->size(); ++i) program.functions.push_back(parse_function((*fns)[i], i));
  return program;
}

std::string serialize_listing(const Program& program) {
  json doc;
  doc["binary"] = program.binary;
  json fns = json::array();
  for (const auto& fn : program.functions) {
    json f;
    if (fn.name) f["name"] = *fn.name;
    f["entry"] = fn.entry;
    json insns = json::array();
    for (const auto& insn : fn.instructions) {
      json i;
      i["addr"] = insn.address;
      i["mnemonic"] = insn.mnemonic;
      json ops = json::array();
      for (const auto& op : insn.operands) ops.push_back(to_string(op));
      i["ops"] = std::move(ops);
      if (insn.resolved_string) i["string"] = *insn.resolved_string;
      if (insn.unparsed_operands) i["unparsed"] = true;
      if (insn.raw_text != to_string(insn)) i["raw"] = insn.raw_text;
      insns.push_back(std::move(i));
    }
    f["instructions"] = std::move(insns);
    fns.push_back(std::move(f));
  }
  doc["functions"] = std::move(fns);
  return doc.dump(1) + "\n";
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_hex(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); });
}

std::uint64_t hex_value(std::string_view s) {
  std::uint64_t v = 0;
  std::from_chars(s.data(), s.data() + s.size(), v, 16);
  return v;
}

bool is_prefix_word(std::string_view w) {
  static constexpr std::string_view kPrefixes[] = {
      "rep", "repe", "repz", "repne", "repnz", "lock", "bnd", "notrack", "data16", "data32", "addr32",
      "cs",  "ds",   "es",   "fs",    "gs",    "ss"};
  return std::find(std::begin(kPrefixes), std::end(kPrefixes), w) != std::end(kPrefixes);
}

bool looks_like_bytes(std::string_view s) {
  s = trim(s);
  if (s.empty()) return true;
  for (std::size_t i = 0; i < s.size();) {
    if (i + 2 > s.size() || !is_hex(s.substr(i, 2))) return false;
    i += 2;
    while (i < s.size() && s[i] == ' ') ++i;
  }
  return true;
}

// "0000000000401126 <helper>:"
bool parse_symbol_header(std::string_view line, std::uint64_t& addr, std::string& name) {
  line = trim(line);
  if (line.size() < 4 || line.back() != ':') return false;
  auto sp = line.find(' ');
  if (sp == std::string_view::npos || !is_hex(line.substr(0, sp))) return false;
  auto rest = trim(line.substr(sp + 1));
  if (rest.size() < 4 || rest.front() != '<' || rest.substr(rest.size() - 2) != ">:") return false;
  addr = hex_value(line.substr(0, sp));
  name = std::string(rest.substr(1, rest.size() - 3));
  return true;
}

}  // namespace

ObjdumpResult parse_objdump(std::string_view text) {
  ObjdumpResult result;
  std::optional<std::size_t> current_index;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string_view lv = line;
    if (trim(lv).empty()) continue;

    if (auto pos = line.find(":     file format"); pos != std::string::npos) {
      result.program.binary = std::string(trim(lv.substr(0, pos)));
      continue;
    }

    std::uint64_t addr = 0;
    std::string sym;
    if (parse_symbol_header(lv, addr, sym)) {
      Function fn;
      fn.name = sym;
      fn.entry = addr;
      result.program.functions.push_back(std::move(fn));
      current_index = result.program.functions.size() - 1;
      continue;
    }

    auto colon = lv.find(':');
    if (colon == std::string_view::npos || !is_hex(trim(lv.substr(0, colon)))) continue;
    addr = hex_value(trim(lv.substr(0, colon)));
    std::string_view rest = lv.substr(colon + 1);
    if (!rest.empty() && rest.front() == '\t') rest.remove_prefix(1);

    std::string_view insn_text;
    auto tab = rest.find('\t');
    if (tab != std::string_view::npos) {
      insn_text = trim(rest.substr(tab + 1));
    } else if (!looks_like_bytes(rest)) {
      insn_text = trim(rest);  // --no-show-raw-insn
    }
    if (auto hash = insn_text.find('#'); hash != std::string_view::npos) insn_text = trim(insn_text.substr(0, hash));

    std::string where = "line " + std::to_string(line_no) + " (" + hex_string(addr) + ")";
    if (insn_text.empty()) {
      result.warnings.push_back(where + ": data without mnemonic skipped");
      continue;
    }
    if (!current_index) {
      result.warnings.push_back(where + ": instruction outside any function skipped");
      continue;
    }
    Function* current = &result.program.functions[*current_index];
    if (insn_text.find("(bad)") != std::string_view::npos) {
      result.warnings.push_back(where + ": undecodable bytes skipped");
      continue;
    }
    if (!current->instructions.empty() && current->instructions.back().address >= addr) {
      result.warnings.push_back(where + ": out-of-order address skipped");
      continue;
    }

    std::vector<std::string_view> words;
    std::size_t p = 0;
    while (p < insn_text.size()) {
      while (p < insn_text.size() && std::isspace(static_cast<unsigned char>(insn_text[p]))) ++p;
      std::size_t q = p;
      while (q < insn_text.size() && !std::isspace(static_cast<unsigned char>(insn_text[q]))) ++q;
      if (q > p) words.push_back(insn_text.substr(p, q - p));
      p = q;
    }
    std::size_t w = 0;
    while (w + 1 < words.size() && is_prefix_word(lower(std::string(words[w])))) ++w;

    Instruction insn;
    insn.address = addr;
    insn.raw_text = std::string(insn_text);
    insn.mnemonic = lower(std::string(words[w]));
    std::string_view operand_text;
    if (w + 1 < words.size()) {
      auto start = static_cast<std::size_t>(words[w + 1].data() - insn_text.data());
      operand_text = trim(insn_text.substr(start));
    }
    try {
      for (const auto& op : split_operands(operand_text)) {
        insn.operands.push_back(parse_operand(op, insn.mnemonic, OperandSyntax{true}));
      }
    } catch (const ParseError& e) {
      insn.operands.clear();
      insn.unparsed_operands = true;
      result.warnings.push_back(where + ": unsupported operand (" + e.what() + ")");
    }
    current->instructions.push_back(std::move(insn));
  }

  auto& fns = result.program.functions;
  for (auto it = fns.begin(); it != fns.end();) {
    if (it->instructions.empty()) {
      result.warnings.push_back("function '" + it->display_name() + "' has no instructions; dropped");
      it = fns.erase(it);
    } else {
      it->entry = it->instructions.front().address;
      ++it;
    }
  }
  if (fns.empty()) result.warnings.push_back("no function labels recognized; program is empty");
  return result;
}

}  // namespace keydiff
