#pragma once

#include <ostream>
#include <string>

namespace dpdl {

// Oracle suites behind `dpdl verify`. Each writes one line per check to out
// and returns true when every check is within tolerance.
bool verify_bridge(std::ostream& out);
bool verify_losses(std::ostream& out);

}  // namespace dpdl
