#include "oodbench/pipeline.hpp"

int main(int argc, char** argv) { return oodbench::run_cli(argc, argv); }
