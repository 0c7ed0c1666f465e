#include "ppe/pipeline.hpp"

int main(int argc, char** argv) { return ppe::run_cli(argc, argv); }
