#include "cli_app.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return ctxlab::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
