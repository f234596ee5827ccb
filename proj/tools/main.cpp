#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return sslab::run_cli(argc, argv, std::cout, std::cerr); }
