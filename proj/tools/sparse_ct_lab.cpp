#include <iostream>

#include "sct/cli.hpp"

int main(int argc, char** argv) {
  return sct::cli::run_subcommand(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
