#include <iostream>

#include "ccm/cli.hpp"

int main(int argc, char** argv) { return ccm::cli::run(argc, argv, std::cout, std::cerr); }
