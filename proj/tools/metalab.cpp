#include <iostream>

#include "metalab/commands.hpp"

int main(int argc, char** argv) { return metalab::run_cli(argc, argv, std::cout, std::cerr); }
