#include "disco/cli.hpp"

int main(int argc, char** argv) { return disco::run_cli(argc, argv); }
