#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "cagnet/curation.hpp"

namespace cagnet::cli {

// Exit codes: 0 success, 1 runtime or data error, 2 usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Runs one subcommand. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

nlohmann::ordered_json split_manifest_json(const curation::SplitManifest& split, std::uint64_t seed);
void write_split_file(const curation::SplitManifest& split, std::uint64_t seed, const std::filesystem::path& path);
// clip_id -> split from a file written by write_split_file.
std::map<std::string, curation::Split> load_split_assignment(const std::filesystem::path& path);

}  // namespace cagnet::cli
