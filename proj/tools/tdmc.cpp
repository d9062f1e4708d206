#include "tdm/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return tdm::cli::run(argc, argv, std::cout, std::cerr);
}
