#include <iostream>

#include "bciwalk/cli/commands.hpp"

int main(int argc, char** argv) { return bciwalk::cli::run(argc, argv, std::cout, std::cerr); }
