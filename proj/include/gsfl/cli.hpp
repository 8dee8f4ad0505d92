#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gsfl {

// Entry point of the `gsfl` tool: synth, cluster, train, eval, ablate, export.
// Returns the process exit code (0 ok, 2 usage, 3 data/format, 4 divergence).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gsfl
