#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace evscale {

/// Entry point of the evscale command; returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace evscale
