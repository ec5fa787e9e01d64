// include/svid/cli.h

#ifndef SVID_CLI_H_
#define SVID_CLI_H_

#include <string>
#include <vector>

namespace svid {

/// Exit codes: 0 success, 1 usage or invalid input, 2 some sweep entries
/// failed, 3 I/O or file-format error. args[0] is the program name.
int RunCli(const std::vector<std::string>& args);

}  // namespace svid

#endif  // SVID_CLI_H_
