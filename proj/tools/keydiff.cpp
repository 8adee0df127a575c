#include <iostream>

#include "keydiff/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return keydiff::run_cli(args, std::cout, std::cerr);
}
