#include "abclstm/commands.hpp"

int main(int argc, char** argv) { return abclstm::run_cli(argc, argv); }
