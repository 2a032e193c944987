#include "xtal/cli.hpp"

int main(int argc, char** argv) { return xtal::cli::run(argc, argv); }
