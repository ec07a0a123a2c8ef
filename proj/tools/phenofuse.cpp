#include "phenofuse/cli.hpp"

int main(int argc, char** argv) { return phenofuse::cli::run(argc, argv); }
