#pragma once

#include <iostream>
#include <string>
#include <vector>

// Command-line front end: one subcommand per workflow step (gen-data, train,
// sample, eval, rollout, spectrum, bench). Exit codes: 0 success, 1 for I/O
// or validation failures (one "error: ..." line on the error stream), 2 for
// usage mistakes (unknown command or flag).
namespace fq::cli {

int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
            std::ostream& err = std::cerr);

}  // namespace fq::cli
