#include "cli/commands.hpp"

int main(int argc, char** argv) { return bsp::cli::main_entry(argc, argv); }
