#include "cli.hpp"

int main(int argc, char** argv) { return bqr::cli::main_entry(argc, argv); }
