#include <iostream>

#include "bpdo/cli.hpp"

int main(int argc, char** argv) { return bpdo::cli::run(argc, argv, std::cout, std::cerr); }
