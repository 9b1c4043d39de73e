#include <iostream>

#include "lnrf/cli.hpp"

int main(int argc, char** argv) { return lnrf::cli::parse_and_dispatch(argc, argv, std::cout, std::cerr); }
