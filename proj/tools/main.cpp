#include "statfuse/cli.hpp"

int main(int argc, char** argv) { return statfuse::run_cli(argc, argv); }
