#include "tfno/cli/cli.hpp"

int main(int argc, char** argv) { return tfno::cli::run(argc, argv); }
