#include <iostream>
#include <string>
#include <vector>

#include "pfv/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return pfv::run_cli(args, std::cout, std::cerr);
}
