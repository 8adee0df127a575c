#include "keydiff/program.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdio>

namespace keydiff {
namespace {

struct RegSpelling {
  const char* name;
  Reg family;
  std::uint8_t width;
  bool high;
};

constexpr RegSpelling kRegisters[] = {
    {"rax", Reg::rax, 64, false}, {"eax", Reg::rax, 32, false}, {"ax", Reg::rax, 16, false},
    {"al", Reg::rax, 8, false},   {"ah", Reg::rax, 8, true},    {"rbx", Reg::rbx, 64, false},
    {"ebx", Reg::rbx, 32, false}, {"bx", Reg::rbx, 16, false},  {"bl", Reg::rbx, 8, false},
    {"bh", Reg::rbx, 8, true},    {"rcx", Reg::rcx, 64, false}, {"ecx", Reg::rcx, 32, false},
    {"cx", Reg::rcx, 16, false},  {"cl", Reg::rcx, 8, false},   {"ch", Reg::rcx, 8, true},
    {"rdx", Reg::rdx, 64, false}, {"edx", Reg::rdx, 32, false}, {"dx", Reg::rdx, 16, false},
    {"dl", Reg::rdx, 8, false},   {"dh", Reg::rdx, 8, true},    {"rsi", Reg::rsi, 64, false},
    {"esi", Reg::rsi, 32, false}, {"si", Reg::rsi, 16, false},  {"sil", Reg::rsi, 8, false},
    {"rdi", Reg::rdi, 64, false}, {"edi", Reg::rdi, 32, false}, {"di", Reg::rdi, 16, false},
    {"dil", Reg::rdi, 8, false},  {"rbp", Reg::rbp, 64, false}, {"ebp", Reg::rbp, 32, false},
    {"bp", Reg::rbp, 16, false},  {"bpl", Reg::rbp, 8, false},  {"rsp", Reg::rsp, 64, false},
    {"esp", Reg::rsp, 32, false}, {"sp", Reg::rsp, 16, false},  {"spl", Reg::rsp, 8, false},
    {"r8", Reg::r8, 64, false},   {"r8d", Reg::r8, 32, false},  {"r8w", Reg::r8, 16, false},
    {"r8b", Reg::r8, 8, false},   {"r9", Reg::r9, 64, false},   {"r9d", Reg::r9, 32, false},
    {"r9w", Reg::r9, 16, false},  {"r9b", Reg::r9, 8, false},   {"r10", Reg::r10, 64, false},
    {"r10d", Reg::r10, 32, false}, {"r10w", Reg::r10, 16, false}, {"r10b", Reg::r10, 8, false},
    {"r11", Reg::r11, 64, false}, {"r11d", Reg::r11, 32, false}, {"r11w", Reg::r11, 16, false},
    {"r11b", Reg::r11, 8, false}, {"r12", Reg::r12, 64, false}, {"r12d", Reg::r12, 32, false},
    {"r12w", Reg::r12, 16, false}, {"r12b", Reg::r12, 8, false}, {"r13", Reg::r13, 64, false},
    {"r13d", Reg::r13, 32, false}, {"r13w", Reg::r13, 16, false}, {"r13b", Reg::r13, 8, false},
    {"r14", Reg::r14, 64, false}, {"r14d", Reg::r14, 32, false}, {"r14w", Reg::r14, 16, false},
    {"r14b", Reg::r14, 8, false}, {"r15", Reg::r15, 64, false}, {"r15d", Reg::r15, 32, false},
    {"r15w", Reg::r15, 16, false}, {"r15b", Reg::r15, 8, false}, {"rip", Reg::rip, 64, false},
    {"eip", Reg::rip, 32, false},
};

struct WidthSpelling {
  const char* name;
  std::uint16_t bits;
};

constexpr std::array<WidthSpelling, 10> kWidths{{
    {"byte", 8}, {"word", 16}, {"dword", 32}, {"fword", 48}, {"qword", 64},
    {"tbyte", 80}, {"xmmword", 128}, {"oword", 128}, {"ymmword", 256}, {"zmmword", 512},
}};

constexpr std::array<const char*, 6> kSegments{"cs", "ds", "es", "fs", "gs", "ss"};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool starts_with_word(std::string_view s, std::string_view word) {
  if (s.size() < word.size() || s.substr(0, word.size()) != word) return false;
  return s.size() == word.size() || std::isspace(static_cast<unsigned char>(s[word.size()]));
}

std::optional<std::uint64_t> parse_unsigned(std::string_view s, bool bare_hex) {
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    s.remove_prefix(2);
    base = 16;
  } else if (bare_hex) {
    base = 16;
  }
  if (s.empty()) return std::nullopt;
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<std::int64_t> parse_signed(std::string_view s) {
  bool neg = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    neg = s[0] == '-';
    s.remove_prefix(1);
  }
  auto v = parse_unsigned(s, false);
  if (!v) return std::nullopt;
  std::uint64_t u = neg ? 0 - *v : *v;
  return static_cast<std::int64_t>(u);
}

bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_' || s[0] == '.' || s[0] == '$')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '@' || c == '$';
  });
}

bool takes_label(std::string_view mnemonic) {
  return is_jump(mnemonic) || is_call(mnemonic) || mnemonic == "xbegin";
}

MemoryRef parse_memory_body(std::string_view body, std::string_view whole) {
  MemoryRef m;
  body = trim(body);
  if (body.empty()) throw ParseError("empty memory operand '" + std::string(whole) + "'");
  bool have_disp = false;
  std::size_t pos = 0;
  while (pos < body.size()) {
    char sign = '+';
    if (body[pos] == '+' || body[pos] == '-') {
      sign = body[pos];
      ++pos;
    }
    std::size_t end = pos;
    while (end < body.size() && body[end] != '+' && body[end] != '-') ++end;
    std::string term = lower(trim(body.substr(pos, end - pos)));
    pos = end;
    if (term.empty()) throw ParseError("malformed memory operand '" + std::string(whole) + "'");

    auto star = term.find('*');
    if (star != std::string::npos) {
      std::string lhs(trim(std::string_view(term).substr(0, star)));
      std::string rhs(trim(std::string_view(term).substr(star + 1)));
      auto reg = lookup_register(lhs);
      auto scale = parse_unsigned(rhs, false);
      if (!reg) {
        reg = lookup_register(rhs);
        scale = parse_unsigned(lhs, false);
      }
      if (!reg || !scale) throw ParseError("malformed scaled index in '" + std::string(whole) + "'");
      if (*scale != 1 && *scale != 2 && *scale != 4 && *scale != 8) {
        throw ParseError("invalid scale " + std::to_string(*scale) + " in '" + std::string(whole) + "'");
      }
      if (sign == '-' || m.index) throw ParseError("malformed scaled index in '" + std::string(whole) + "'");
      m.index = reg->family;
      m.scale = static_cast<std::uint8_t>(*scale);
      continue;
    }
    if (auto reg = lookup_register(term)) {
      if (sign == '-') throw ParseError("negated register in '" + std::string(whole) + "'");
      if (!m.base) {
        m.base = reg->family;
      } else if (!m.index) {
        m.index = reg->family;
        m.scale = 1;
      } else {
        throw ParseError("too many registers in '" + std::string(whole) + "'");
      }
      continue;
    }
    auto v = parse_unsigned(term, false);
    if (!v) throw ParseError("unrecognized memory term '" + term + "' in '" + std::string(whole) + "'");
    std::uint64_t delta = sign == '-' ? 0 - *v : *v;
    m.displacement = static_cast<std::int64_t>(static_cast<std::uint64_t>(m.displacement) + delta);
    have_disp = true;
  }
  if (!m.base && !m.index && !have_disp) throw ParseError("empty memory operand '" + std::string(whole) + "'");
  return m;
}

}  // namespace

const char* family_name(Reg r) {
  static constexpr std::array<const char*, kRegisterCount> names{
      "rax", "rbx", "rcx", "rdx", "rsi", "rdi", "rbp", "rsp", "r8",
      "r9",  "r10", "r11", "r12", "r13", "r14", "r15", "rip"};
  return names[static_cast<std::size_t>(r)];
}

std::optional<RegisterRef> lookup_register(std::string_view name) {
  std::string n = lower(name);
  for (const auto& r : kRegisters) {
    if (n == r.name) return RegisterRef{r.family, r.width, r.high};
  }
  return std::nullopt;
}

std::string register_name(const RegisterRef& ref) {
  for (const auto& r : kRegisters) {
    if (r.family == ref.family && r.width == ref.width && r.high == ref.high_byte) return r.name;
  }
  return family_name(ref.family);
}

Operand Operand::make_register(RegisterRef r) {
  Operand o;
  o.kind = Kind::Register;
  o.reg = r;
  return o;
}

Operand Operand::make_immediate(std::int64_t v) {
  Operand o;
  o.kind = Kind::Immediate;
  o.imm = v;
  return o;
}

Operand Operand::make_memory(MemoryRef m) {
  Operand o;
  o.kind = Kind::Memory;
  o.mem = std::move(m);
  return o;
}

Operand Operand::make_label(LabelRef l) {
  Operand o;
  o.kind = Kind::Label;
  o.label = std::move(l);
  return o;
}

std::string hex_string(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

std::string signed_hex(std::int64_t v) {
  if (v < 0) return "-" + hex_string(0 - static_cast<std::uint64_t>(v));
  return hex_string(static_cast<std::uint64_t>(v));
}

}  // namespace

std::string to_string(const Operand& op) {
  switch (op.kind) {
    case Operand::Kind::Register: return register_name(op.reg);
    case Operand::Kind::Immediate: return signed_hex(op.imm);
    case Operand::Kind::Label: {
      std::string s;
      if (op.label.address) s = hex_string(*op.label.address);
      if (op.label.symbol) s += (s.empty() ? "<" : " <") + *op.label.symbol + ">";
      return s;
    }
    case Operand::Kind::Memory: {
      const MemoryRef& m = op.mem;
      std::string s;
      if (m.width != 0) {
        for (const auto& w : kWidths) {
          if (w.bits == m.width) {
            s = std::string(w.name) + " ptr ";
            break;
          }
        }
      }
      if (m.segment) s += *m.segment + ":";
      s += "[";
      bool any = false;
      if (m.base) {
        s += family_name(*m.base);
        any = true;
      }
      if (m.index) {
        if (any) s += "+";
        s += std::string(family_name(*m.index)) + "*" + std::to_string(m.scale);
        any = true;
      }
      if (!any) {
        s += signed_hex(m.displacement);
      } else if (m.displacement != 0) {
        std::string d = signed_hex(m.displacement);
        s += d[0] == '-' ? d : "+" + d;
      }
      s += "]";
      return s;
    }
  }
  return {};
}

std::string to_string(const Instruction& insn) {
  std::string s = insn.mnemonic;
  for (std::size_t i = 0; i < insn.operands.size(); ++i) {
    s += i == 0 ? " " : ", ";
    s += to_string(insn.operands[i]);
  }
  return s;
}

std::string Function::display_name() const {
  if (name) return *name;
  return hex_string(entry);
}

bool is_conditional_branch(std::string_view m) {
  static constexpr std::array<std::string_view, 39> kCond{
      "ja",   "jae",  "jb",   "jbe",   "jc",    "je",    "jg",     "jge",   "jl",    "jle",
      "jna",  "jnae", "jnb",  "jnbe",  "jnc",   "jne",   "jng",    "jnge",  "jnl",   "jnle",
      "jno",  "jnp",  "jns",  "jnz",   "jo",    "jp",    "jpe",    "jpo",   "js",    "jz",
      "jcxz", "jecxz", "jrcxz", "loop", "loope", "loopne", "loopz", "loopnz", "xbegin"};
  return std::find(kCond.begin(), kCond.end(), m) != kCond.end();
}

bool is_jump(std::string_view m) { return m == "jmp" || is_conditional_branch(m); }

bool is_call(std::string_view m) { return m == "call" || m == "callq"; }

bool is_return(std::string_view m) {
  return m == "ret" || m == "retq" || m == "retn" || m == "retf" || m == "iret" || m == "iretq";
}

bool ends_flow(std::string_view m) { return m == "jmp" || is_return(m) || m == "hlt" || m == "ud2"; }

std::vector<std::string> split_operands(std::string_view text) {
  std::vector<std::string> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '[' || c == '<' || c == '(') ++depth;
    else if (c == ']' || c == '>' || c == ')') --depth;
    else if (c == ',' && depth == 0) {
      out.emplace_back(trim(text.substr(start, i - start)));
      start = i + 1;
    }
  }
  auto last = trim(text.substr(start));
  if (!last.empty() || !out.empty()) out.emplace_back(last);
  return out;
}

Operand parse_operand(std::string_view text, std::string_view mnemonic, OperandSyntax syntax) {
  std::string_view t = trim(text);
  if (t.empty()) throw ParseError("empty operand");
  std::string lt = lower(t);

  std::uint16_t width = 0;
  for (const auto& w : kWidths) {
    std::string prefix = std::string(w.name) + " ptr";
    if (starts_with_word(lt, prefix)) {
      width = w.bits;
      lt = std::string(trim(std::string_view(lt).substr(prefix.size())));
      t = trim(t.substr(t.size() - lt.size()));
      break;
    }
  }

  std::optional<std::string> segment;
  for (const char* seg : kSegments) {
    std::string p = std::string(seg) + ":";
    if (lt.rfind(p, 0) == 0) {
      segment = seg;
      lt = std::string(trim(std::string_view(lt).substr(p.size())));
      t = trim(t.substr(t.size() - lt.size()));
      break;
    }
  }

  if (!lt.empty() && lt.front() == '[') {
    if (lt.back() != ']') throw ParseError("unterminated memory operand '" + std::string(text) + "'");
    MemoryRef m = parse_memory_body(std::string_view(lt).substr(1, lt.size() - 2), text);
    m.segment = segment;
    m.width = width;
    return Operand::make_memory(std::move(m));
  }
  if (segment) {
    // fs:0x28
    auto v = parse_signed(lt);
    if (!v) throw ParseError("malformed segment operand '" + std::string(text) + "'");
    MemoryRef m;
    m.displacement = *v;
    m.segment = segment;
    m.width = width;
    return Operand::make_memory(std::move(m));
  }
  if (width != 0) throw ParseError("size prefix without memory operand '" + std::string(text) + "'");

  if (auto reg = lookup_register(lt)) return Operand::make_register(*reg);

  if (takes_label(mnemonic)) {
    LabelRef label;
    std::string_view rest = t;
    auto lt_pos = rest.find('<');
    if (lt_pos != std::string_view::npos) {
      auto gt_pos = rest.rfind('>');
      if (gt_pos == std::string_view::npos || gt_pos < lt_pos) {
        throw ParseError("malformed label '" + std::string(text) + "'");
      }
      label.symbol = std::string(rest.substr(lt_pos + 1, gt_pos - lt_pos - 1));
      rest = trim(rest.substr(0, lt_pos));
    }
    if (!rest.empty()) {
      if (auto v = parse_unsigned(rest, syntax.bare_branch_targets_hex)) {
        label.address = *v;
      } else if (!label.symbol && is_identifier(rest)) {
        label.symbol = std::string(rest);
      } else {
        throw ParseError("malformed branch target '" + std::string(text) + "'");
      }
    }
    if (!label.address && !label.symbol) throw ParseError("empty branch target");
    return Operand::make_label(std::move(label));
  }

  if (auto v = parse_signed(lt)) return Operand::make_immediate(*v);
  throw ParseError("unrecognized operand '" + std::string(text) + "'");
}

}  // namespace keydiff
