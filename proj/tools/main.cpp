#include <vector>

#include "mpdf/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mpdf::cli::run(args);
}
