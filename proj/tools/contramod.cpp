#include <iostream>
#include <string>
#include <vector>

#include "contramod/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return contramod::run_cli(args, std::cout, std::cerr);
}
