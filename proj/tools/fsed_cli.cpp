#include "fsed/cli.hpp"

int main(int argc, char** argv) { return fsed::cli::run(argc, argv); }
