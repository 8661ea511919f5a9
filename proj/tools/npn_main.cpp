#include "npn/cli.hpp"

int main(int argc, char** argv) { return npn::cli::main(argc, argv); }
