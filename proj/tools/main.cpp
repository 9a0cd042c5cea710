#include <iostream>

#include "scopeqa/cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return scopeqa::cli::run(args, std::cout, std::cerr);
}
