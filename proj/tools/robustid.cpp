#include "robustid/cli.hpp"

int main(int argc, char** argv) { return robustid::dispatch(argc, argv); }
