#include "stf/cli.hpp"

int main(int argc, char** argv) { return stf::cli::run(argc, argv); }
