#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace keydiff {

/// 64-bit register families. Partial registers (eax, ax, al, ah, r8d, ...)
/// map onto their family.
enum class Reg : std::uint8_t {
  rax, rbx, rcx, rdx, rsi, rdi, rbp, rsp,
  r8, r9, r10, r11, r12, r13, r14, r15,
  rip,
};

inline constexpr std::size_t kRegisterCount = 17;

const char* family_name(Reg r);

struct RegisterRef {
  Reg family = Reg::rax;
  std::uint8_t width = 64;  // 8, 16, 32 or 64
  bool high_byte = false;   // ah, bh, ch, dh

  friend bool operator==(const RegisterRef&, const RegisterRef&) = default;
};

/// Looks up an Intel register spelling ("eax", "r9b", "ah", ...).
std::optional<RegisterRef> lookup_register(std::string_view name);
std::string register_name(const RegisterRef& r);

struct MemoryRef {
  std::optional<Reg> base;
  std::optional<Reg> index;
  std::uint8_t scale = 1;  // 1, 2, 4 or 8
  std::int64_t displacement = 0;
  std::optional<std::string> segment;
  std::uint16_t width = 0;  // access size in bits when spelled out ("qword ptr"), else 0

  friend bool operator==(const MemoryRef&, const MemoryRef&) = default;
};

struct LabelRef {
  std::optional<std::uint64_t> address;
  std::optional<std::string> symbol;

  friend bool operator==(const LabelRef&, const LabelRef&) = default;
};

struct Operand {
  enum class Kind : std::uint8_t { Register, Immediate, Memory, Label };

  Kind kind = Kind::Immediate;
  RegisterRef reg;
  std::int64_t imm = 0;
  MemoryRef mem;
  LabelRef label;

  static Operand make_register(RegisterRef r);
  static Operand make_immediate(std::int64_t v);
  static Operand make_memory(MemoryRef m);
  static Operand make_label(LabelRef l);

  bool is_register() const { return kind == Kind::Register; }
  bool is_memory() const { return kind == Kind::Memory; }
  bool is_immediate() const { return kind == Kind::Immediate; }
  bool is_label() const { return kind == Kind::Label; }

  friend bool operator==(const Operand&, const Operand&) = default;
};

/// Canonical Intel spelling that parse_operand accepts back.
std::string to_string(const Operand& op);

struct Instruction {
  std::uint64_t address = 0;
  std::string mnemonic;
  std::vector<Operand> operands;
  std::optional<std::string> resolved_string;
  std::string raw_text;
  /// Set by a front end when the operand text could not be parsed; the
  /// instruction is kept with no operands.
  bool unparsed_operands = false;

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

std::string to_string(const Instruction& insn);

struct Function {
  std::optional<std::string> name;
  std::uint64_t entry = 0;
  std::vector<Instruction> instructions;

  /// Symbol name if present, otherwise the entry address in hex.
  std::string display_name() const;

  friend bool operator==(const Function&, const Function&) = default;
};

struct Program {
  std::string binary;
  std::vector<Function> functions;

  friend bool operator==(const Program&, const Program&) = default;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

bool is_conditional_branch(std::string_view mnemonic);
/// jmp or a conditional jump.
bool is_jump(std::string_view mnemonic);
bool is_call(std::string_view mnemonic);
bool is_return(std::string_view mnemonic);
/// Instructions after which control never falls through.
bool ends_flow(std::string_view mnemonic);

struct OperandSyntax {
  /// Bare numbers in branch targets are hex (objdump style) rather than
  /// decimal.
  bool bare_branch_targets_hex = false;
};

/// Parses one Intel-syntax operand. Branch mnemonics turn numeric and
/// symbolic operands into labels. Throws ParseError on malformed input.
Operand parse_operand(std::string_view text, std::string_view mnemonic, OperandSyntax syntax = {});

/// Splits an operand list on top-level commas.
std::vector<std::string> split_operands(std::string_view text);

std::string hex_string(std::uint64_t v);

}  // namespace keydiff
