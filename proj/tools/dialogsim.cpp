#include "dialogsim/cli.hpp"

int main(int argc, char** argv) { return dialogsim::cli::run(argc, argv); }
