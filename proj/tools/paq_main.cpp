#include <iostream>

#include "paq/cli.hpp"

int main(int argc, char** argv) {
    return paq::cli::run(argc, argv, std::cout, std::cerr);
}
