#include "cli.hpp"

int main(int argc, char** argv) { return ptarget::cli::run(argc, argv); }
