#include "cli.hpp"

int main(int argc, char** argv) { return gbmo::cli::run(argc, argv); }
