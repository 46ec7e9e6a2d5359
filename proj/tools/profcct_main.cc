#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <unistd.h>

#include "profcct/cli.h"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  profcct::CliOptions options;
  options.color = isatty(STDOUT_FILENO) && std::getenv("PROFCCT_NO_COLOR") == nullptr;
  return profcct::run_cli(args, std::cout, std::cerr, options);
}
