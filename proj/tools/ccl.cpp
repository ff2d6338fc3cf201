#include "cli_app.hpp"

int main(int argc, char** argv) { return ccl::cli::run(argc, argv); }
