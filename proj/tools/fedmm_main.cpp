#include "fedmm/cli/cli.hpp"

int main(int argc, char** argv) { return fedmm::cli::cli_run(argc, argv); }
