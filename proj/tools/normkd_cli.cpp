#include <iostream>

#include "normkd/harness/cli.hpp"

int main(int argc, char** argv) {
  return normkd::harness::run_cli(argc, argv, std::cout, std::cerr);
}
