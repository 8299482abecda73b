#include <iostream>

#include "seqcluster/cli.hpp"

int main(int argc, char** argv) { return seqcluster::run_cli(argc, argv, std::cout, std::cerr); }
