#include "commands.hpp"

int main(int argc, char** argv) { return resdiff::cli::run(argc, argv); }
