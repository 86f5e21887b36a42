#include "wkam/cli.hpp"

#include <iostream>

int main(int argc, char **argv) { return wkam::run_cli(argc, argv, std::cout, std::cerr); }
