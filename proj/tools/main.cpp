#include <iostream>
#include <string>
#include <vector>

#include "dsnot/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return dsnot::cli::run(args, std::cout, std::cerr);
}
