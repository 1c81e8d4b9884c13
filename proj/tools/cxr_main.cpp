#include "cxr/cli.hpp"

int main(int argc, char** argv) { return cxr::cli_main(argc, argv); }
