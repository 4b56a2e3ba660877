#include <string>
#include <vector>

#include "glmtilt/cli.hpp"

int main(int argc, char** argv) {
  return glmtilt::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
