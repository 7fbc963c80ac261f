// Copyright 2026 The vocsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <iostream>
#include <string>
#include <vector>

#include "vocsep/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return vocsep::cli::run_cli(std::move(args), std::cout, std::cerr);
}
