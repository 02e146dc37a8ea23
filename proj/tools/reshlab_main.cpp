#include <iostream>

#include "reshlab/cli.hpp"

int main(int argc, char** argv) {
    return reshlab::run_cli(argc, argv, std::cout, std::cerr);
}
