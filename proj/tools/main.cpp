#include "dhmbpo/cli/cli.hpp"

int main(int argc, char** argv) { return dhmbpo::cli::run(argc, argv); }
