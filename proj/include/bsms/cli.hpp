#pragma once

namespace bsms::cli {

/// Entry point of the `bsms` tool. Returns the process exit code:
/// 0 success, 2 bad arguments, 3 I/O failure, 4 numerical failure.
int run(int argc, char** argv);

}  // namespace bsms::cli
