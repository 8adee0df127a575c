#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "keydiff/program.hpp"

namespace keydiff {

/// Parses a JSON listing document:
///
///   {"binary": str, "functions": [{"name": str?, "entry": uint,
///     "instructions": [{"addr": uint, "mnemonic": str, "ops": [str...],
///                       "string": str?}]}]}
///
/// Unknown fields are ignored. Instructions are stored in address order.
/// Throws ParseError naming the function (and address, when known).
Program parse_listing(std::string_view text);

/// Writes the canonical listing document. Operand strings use the spelling
/// of to_string(Operand), so parse_listing(serialize_listing(p)) == p.
std::string serialize_listing(const Program& program);

struct ObjdumpResult {
  Program program;
  std::vector<std::string> warnings;
};

/// Parses `objdump -d -M intel` style text: `<symbol>:` headers start
/// functions and `addr: bytes \t mnemonic operands` lines add instructions.
ObjdumpResult parse_objdump(std::string_view text);

}  // namespace keydiff
