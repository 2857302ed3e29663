#include <string>
#include <vector>

#include "morphofv/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return morphofv::run_cli(args);
}
