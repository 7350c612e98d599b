#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dpdl::cli {

enum ExitCode : int {
  kOk = 0,
  kInvalid = 1,       // bad flags, configs, inputs or file formats
  kVerifyFailed = 2,  // an oracle check was out of tolerance
  kRuntime = 3,       // IO or numeric failure
};

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// argv[0] is supplied.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dpdl::cli
