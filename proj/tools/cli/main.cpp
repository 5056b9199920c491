// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "bism_cli/commands.hpp"

int main(int argc, char** argv) { return bism::cli::run(argc, argv, std::cout, std::cerr); }
