#include "subalign/cli.hpp"

int main(int argc, char** argv) { return subalign::run_cli(argc, argv); }
