#include <iostream>

#include "sparxnet/cli.hpp"

int main(int argc, char** argv) { return sparxnet::cli::dispatch(argc, argv, std::cout, std::cerr); }
