#include "preflearn/cli/commands.hpp"

int main(int argc, char** argv) { return preflearn::cli::run_command(argc, argv); }
