#include "boostlab/cli.hpp"

int main(int argc, char** argv) { return boostlab::run_cli(argc, argv); }
