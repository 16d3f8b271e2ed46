#include "basisconv/cli.hpp"

int main(int argc, char** argv) { return basisconv::run_cli(argc, argv); }
