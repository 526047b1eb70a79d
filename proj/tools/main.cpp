#include "sjoin/cli.hpp"

int main(int argc, char** argv) { return sjoin::cli_main(argc, argv); }
