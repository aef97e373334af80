// SPDX-License-Identifier: Apache-2.0
#include "mdal/cli.hpp"

int main(int argc, char** argv) { return mdal::cli::main(argc, argv); }
