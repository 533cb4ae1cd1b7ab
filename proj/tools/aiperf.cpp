#include <string>
#include <vector>

#include "aiperf/cli_config.hpp"

int main(int argc, char** argv) {
  return aiperf::cli_main(std::vector<std::string>(argv + 1, argv + argc));
}
