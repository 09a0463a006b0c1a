#include "remember/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return remember::cli::run(argc, argv, std::cout, std::cerr); }
