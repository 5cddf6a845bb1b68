#include "toolplanner/cli.hpp"

int main(int argc, char** argv) { return toolplanner::run_cli(argc, argv); }
