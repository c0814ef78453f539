#include <iostream>
#include <string>
#include <vector>

#include "ttavid/app/commands.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return ttavid::app::run_cli(args, std::cout, std::cerr);
}
