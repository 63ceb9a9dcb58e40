#include "wderiv/cli.hpp"

int main(int argc, char** argv) { return wderiv::cli::main_entry(argc, argv); }
