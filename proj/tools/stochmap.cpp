#include "stochmap/cli.hpp"

int main(int argc, char** argv) { return stochmap::run_cli(argc, argv); }
