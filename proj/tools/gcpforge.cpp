#include <iostream>

#include "gcp/cli.hpp"

int main(int argc, char** argv) { return gcp::cli::run(argc, argv, std::cout, std::cerr); }
