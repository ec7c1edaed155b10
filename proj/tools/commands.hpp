#pragma once

namespace resdiff::cli {

// Exit status: 0 success, 1 module error, 2 usage error.
int run(int argc, char** argv);

}  // namespace resdiff::cli
