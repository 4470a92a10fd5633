#include "pfc/appio.hpp"

int main(int argc, char** argv) { return pfc::cli_main(argc, argv); }
