#include <iostream>

#include "pollenstack/commands.hpp"

int main(int argc, char** argv) {
  return pollenstack::cli::run(argc, argv, std::cout, std::cerr);
}
