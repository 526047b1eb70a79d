#pragma once

namespace sjoin {

// Entry point behind the sjoin binary, exposed so tests can drive it
// in-process. Returns 0 on success, 1 on user error, 2 on internal failure.
int cli_main(int argc, const char* const* argv);

}  // namespace sjoin
