#include <iostream>

#include "rotenc/cli.hpp"

int main(int argc, char** argv) { return rotenc::run_cli(argc, argv, std::cout, std::cerr); }
