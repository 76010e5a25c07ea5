#include <iostream>

#include "fvx/app.hpp"

int main(int argc, char** argv) { return fvx::run_cli(argc, argv, std::cout, std::cerr); }
