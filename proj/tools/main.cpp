#include "skillrc/cli.hpp"

int main(int argc, char** argv) { return skillrc::cli_main(argc, argv); }
