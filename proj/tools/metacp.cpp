#include "metacp/expcli/commands.hpp"

int main(int argc, char** argv) { return metacp::exp::run_cli(argc, argv); }
