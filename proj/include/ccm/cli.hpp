#pragma once

// Command-line pipeline: topology -> solve -> round -> code -> simulate.
// Subcommands: solve, simulate, place, sweep. See README for file schemas.

#include <optional>
#include <ostream>
#include <string>
#include <string_view>

#include "ccm/network.hpp"

namespace ccm::cli {

// Text of a shipped fixture ("butterfly", "service", "cdn").
std::optional<std::string> builtin_topology(std::string_view name);
// Experiment B for a shipped fixture.
std::optional<double> preset_frame_size(std::string_view name);

// Builtin name or file path.
net::Network resolve_topology(const std::string& spec);

// Exit status: 0 success, 1 usage or pipeline error, 2 solver did not converge.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ccm::cli
