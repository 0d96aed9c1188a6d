#include <string>
#include <vector>

#include "pad/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return pad::dispatch(args);
}
