#include "stlcp/cli.hpp"

int main(int argc, char** argv) { return stlcp::cli::run(argc, argv); }
