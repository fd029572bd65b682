#include "pcfmem/cli.hpp"

int main(int argc, char** argv) { return pcfmem::run_cli(argc, argv); }
