#include "mccdic_cli/cli.hpp"

int main(int argc, char** argv) { return mccdic::cli::run(argc, argv); }
