#include <iostream>

#include "tag2pix/cli.hpp"

int main(int argc, char** argv) { return tag2pix::run_cli(argc, argv, std::cout, std::cerr); }
