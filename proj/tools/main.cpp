// SPDX-License-Identifier: MIT
#include <string>
#include <vector>

#include "expertpde/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return expertpde::cli::run_command(args);
}
