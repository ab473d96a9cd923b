#include "omni/cli/commands.hpp"

int main(int argc, char** argv) { return omni::run_cli(argc, argv); }
