#include "cli.hpp"

int main(int argc, char** argv) { return dpm::cli::dispatch(argc, argv); }
