#include <iostream>
#include <string>
#include <vector>

#include "navtrans/cli.hpp"
#include "navtrans/runtime.hpp"

int main(int argc, char** argv) {
  navtrans::tune_allocator();
  const std::vector<std::string> args(argv + 1, argv + argc);
  return navtrans::cli::run(args, std::cout, std::cerr);
}
