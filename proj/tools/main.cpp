#include "cli.hpp"

int main(int argc, char** argv) { return tollsub::cli::run(argc, argv); }
