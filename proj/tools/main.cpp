#include "redstore/cli.hpp"

int main(int argc, char** argv) {
  return redstore::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
