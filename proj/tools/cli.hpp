#pragma once

namespace ttn::cli {

/// Entry point of the `ttn` tool. Returns the process exit status.
int run(int argc, const char* const* argv);

}  // namespace ttn::cli
