#include <iostream>

#include "amt/cli.hpp"

int main(int argc, char** argv) { return amt::run_cli(argc, argv, std::cout, std::cerr); }
