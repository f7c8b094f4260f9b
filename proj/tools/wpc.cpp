#include "wpc/cli.hpp"

int main(int argc, char** argv) { return wpc::run_cli(argc, argv); }
