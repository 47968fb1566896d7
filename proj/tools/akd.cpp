#include "akd/cli.hpp"

int main(int argc, char** argv) { return akd::run_cli(argc, argv); }
