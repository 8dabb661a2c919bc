#include "cli.hpp"

int main(int argc, char** argv) { return xdistill::cli::run(argc, argv); }
