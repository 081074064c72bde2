#include "cli_commands.hpp"

int main(int argc, char** argv) { return colornet::cli::run(argc, argv); }
