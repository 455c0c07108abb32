#include "vgamba/cli.hpp"

int main(int argc, char** argv) { return vgamba::run_cli(argc, argv); }
