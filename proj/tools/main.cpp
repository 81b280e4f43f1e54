#include "cli.hpp"

int main(int argc, char** argv) { return ttn::cli::run(argc, argv); }
