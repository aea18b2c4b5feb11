#include "edsep/cli.hpp"

int main(int argc, char** argv) { return edsep::cli::run(argc, argv); }
