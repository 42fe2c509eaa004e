#include <iostream>
#include <string>
#include <vector>

#include "malis/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return malis::run_cli(args, std::cout, std::cerr);
}
