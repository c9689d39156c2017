#include "icalib/cli.hpp"

int main(int argc, char** argv) { return icalib::cli::run_cli(argc, argv); }
