#include "eafo/cli.hpp"

int main(int argc, char** argv) { return eafo::cli_main(argc, argv); }
