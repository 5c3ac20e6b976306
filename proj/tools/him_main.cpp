#include "him/commands.hpp"

int main(int argc, char** argv) { return him::run_cli(argc, argv); }
