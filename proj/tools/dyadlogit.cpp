#include <dyadlogit/cli.hpp>

int main(int argc, char** argv) { return dyadlogit::cli_main(argc, argv); }
