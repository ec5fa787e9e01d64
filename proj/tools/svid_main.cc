// tools/svid_main.cc

#include <string>
#include <vector>

#include "svid/cli.h"

int main(int argc, char** argv) {
  return svid::RunCli(std::vector<std::string>(argv, argv + argc));
}
