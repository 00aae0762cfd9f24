#include <string>
#include <vector>

#include "mpmflow/cli/commands.hpp"

int main(int argc, char** argv) {
  return mpmflow::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
