#include "simulacra/cli.hpp"

int main(int argc, char** argv) { return simulacra::cli::run(argc, argv); }
