#include "archpred/cli.hpp"

int main(int argc, char** argv) { return archpred::run_cli(argc, argv); }
