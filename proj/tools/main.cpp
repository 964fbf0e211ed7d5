#include "alignsim/scenario.hpp"

int main(int argc, char** argv) { return alignsim::cli_main(argc, argv); }
