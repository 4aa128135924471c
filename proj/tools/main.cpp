#include "commands.hpp"

int main(int argc, char** argv) { return dastack::cli::run(argc, argv); }
