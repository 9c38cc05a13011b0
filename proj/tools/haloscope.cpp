#include <iostream>

#include "haloscope/cli.hpp"

int main(int argc, char** argv) { return haloscope::run_cli(argc, argv, std::cout, std::cerr); }
