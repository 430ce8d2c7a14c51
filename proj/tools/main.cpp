#include <iostream>

#include "choicematch/cli.hpp"

int main(int argc, char** argv) { return choicematch::cli_main(argc, argv, std::cout, std::cerr); }
