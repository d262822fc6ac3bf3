#include <iostream>

#include "dire/cli.hpp"

int main(int argc, char** argv) { return dire::cli::run(argc, argv, std::cout, std::cerr); }
