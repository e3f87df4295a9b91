#include <string>
#include <vector>

#include "dptab/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dptab::cli::run(args);
}
