#include "dragen/cli.hpp"

int main(int argc, char** argv) { return dragen::cli::run(argc, argv); }
