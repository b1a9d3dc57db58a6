#include <iostream>
#include <string>
#include <vector>

#include "ttpmap_app/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ttpmap::app::cli_run(args, std::cin, std::cout, std::cerr);
}
