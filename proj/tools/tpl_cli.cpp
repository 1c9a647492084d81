#include "tpl/cli.hpp"

int main(int argc, char** argv) { return tpl::run_cli(argc, argv); }
