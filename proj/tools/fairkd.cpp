#include "fairkd/cli.hpp"

int main(int argc, char** argv) { return fairkd::run_cli(argc, argv); }
