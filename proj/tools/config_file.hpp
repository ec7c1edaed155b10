#pragma once

#include <string>
#include <vector>

namespace resdiff::cli {

// Reads `key = value` lines ('#' starts a comment). Returns the pairs in file order.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);

// Splices the entries of the --config file (if any) into args right after the
// subcommand as "--key value". Keys already given on the command line are
// skipped, so flags override the file. `true`/`false` values toggle flags.
std::vector<std::string> expand_config(const std::vector<std::string>& args);

}  // namespace resdiff::cli
