#include <iostream>
#include <string>
#include <vector>

#include "advbench/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return advbench::cli::run_cli(args, std::cerr);
}
