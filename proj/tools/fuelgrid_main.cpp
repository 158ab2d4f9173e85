#include "fuelgrid/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return fuelgrid::cli_main(argc, argv, std::cout, std::cerr); }
