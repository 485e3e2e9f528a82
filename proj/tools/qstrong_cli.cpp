#include "qstrong/cli.hpp"

int main(int argc, char** argv) { return qstrong::cli::main(argc, argv); }
