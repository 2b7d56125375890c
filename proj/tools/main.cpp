#include <string>
#include <vector>

#include "freqflow/cli.hpp"

int main(int argc, char** argv) {
    return fq::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
