#include "cxr/cli/app.hpp"

int main(int argc, char** argv) { return cxr::cli::run_cli(argc, argv); }
