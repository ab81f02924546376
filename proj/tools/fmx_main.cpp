#include <vector>

#include "fmx/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return fmx::cli::run(std::move(args));
}
