#include <iostream>

#include "latentguard/cli.hpp"

int main(int argc, char** argv) {
  return latentguard::run_cli(argc, argv, std::cout, std::cerr);
}
