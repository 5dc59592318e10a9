#include "scsa/cli.hpp"

int main(int argc, char** argv) { return scsa::run_cli(argc, argv); }
