#include "remedy/cli.hpp"

int main(int argc, char** argv) { return remedy::cli::dispatch(argc, argv); }
