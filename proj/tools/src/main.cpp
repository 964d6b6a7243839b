#include <iostream>

#include "lssvc_cli/cli.hpp"

int main(int argc, char** argv) { return lssvc::cli::dispatch(argc, argv, std::cout, std::cerr); }
