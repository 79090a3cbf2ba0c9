#include <iostream>

#include "charmem_cli/cli.hpp"

int main(int argc, char** argv) { return charmem::cli::run_cli(argc, argv, std::cout, std::cerr); }
