#include "optree/cli.hpp"

int main(int argc, char** argv) { return optree::cli::run(argc, argv); }
