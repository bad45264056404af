#include "spikedec/cli.hpp"

int main(int argc, char** argv) { return spikedec::run_cli(argc, argv); }
