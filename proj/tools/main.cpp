#include "jsae/cli.hpp"

int main(int argc, char** argv) {
  return jsae::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
