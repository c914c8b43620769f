#include "dea/cli.hpp"

int main(int argc, char** argv) { return dea::run_cli(argc, argv); }
