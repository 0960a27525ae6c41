#include <iostream>

#include "t2fe/cli.hpp"

int main(int argc, char** argv) { return t2fe::cli::run_cli(argc, argv, std::cout, std::cerr); }
