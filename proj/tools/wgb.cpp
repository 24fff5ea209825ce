#include "wgb/cli.hpp"

int main(int argc, char** argv) { return wgb::run_cli(argc, argv); }
