#include "dra/cli.hpp"

int main(int argc, char** argv) { return dra::cli_dispatch(argc, argv); }
