#include "bsms/cli.hpp"

int main(int argc, char** argv) { return bsms::cli::run(argc, argv); }
