#include "raysplit/cli.hpp"

int main(int argc, char** argv) { return raysplit::cli::run(argc, argv); }
