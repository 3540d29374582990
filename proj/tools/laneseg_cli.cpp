#include "laneseg/cli.hpp"

int main(int argc, char** argv) { return laneseg::run_cli(argc, argv); }
