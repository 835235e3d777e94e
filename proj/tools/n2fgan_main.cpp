#include "n2f/cli.hpp"

int main(int argc, char** argv) { return n2f::cli_main(argc, argv); }
