#include "polyminer/cli.hpp"

int main(int argc, char** argv) { return polyminer::cli::main(argc, argv); }
