#include <iostream>

#include "trunet/cli/app.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return trunet::run_cli(args, trunet::process_environment(), std::cout, std::cerr);
}
