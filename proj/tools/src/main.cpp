#include <iostream>

#include "dpdl_tools/cli.hpp"

int main(int argc, char** argv) { return dpdl::cli::dispatch(argc, argv, std::cout, std::cerr); }
