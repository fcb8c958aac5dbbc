#include "commands.hpp"

int main(int argc, char** argv) { return xood::cli::run(argc, argv); }
