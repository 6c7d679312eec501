#include "dic/cli.hpp"

int main(int argc, char** argv) { return dic::run_cli(argc, argv); }
