#include "seamless/run_spec.hpp"

int main(int argc, char** argv) { return seamless::run_cli(argc, argv); }
