#include "travag/cli.hpp"

int main(int argc, char** argv) { return travag::cli::run(argc, argv); }
