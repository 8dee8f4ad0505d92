#include <iostream>
#include <string>
#include <vector>

#include "gsfl/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return gsfl::run_cli(args, std::cout, std::cerr);
}
