#include <iostream>
#include <string>
#include <vector>

#include "mplnmix/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mplnmix::run_cli(args, std::cout, std::cerr);
}
