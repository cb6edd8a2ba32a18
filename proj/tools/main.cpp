#include <iostream>

#include "ctune/cli.hpp"

int main(int argc, char** argv) { return ctune::run_cli(argc, argv, std::cout, std::cerr); }
