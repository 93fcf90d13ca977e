#include "mdbt/cli.h"

int main(int argc, char** argv) { return mdbt::run_cli(argc, argv); }
