#include "scenediff/cli.hpp"

int main(int argc, char** argv) { return scenediff::cli_main(argc, argv); }
