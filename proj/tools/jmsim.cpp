#include "jmsim/cli.hpp"

int main(int argc, char** argv) { return jmsim::cli::run_cli(argc, argv); }
