#include <string>
#include <vector>

#include "normprop/cli.hpp"

int main(int argc, char** argv) {
  return normprop::cli_main(std::vector<std::string>(argv + 1, argv + argc));
}
