#include <iostream>

#include "mjls/cli.h"

int main(int argc, char** argv) { return mjls::RunCli(argc, argv, std::cout, std::cerr); }
