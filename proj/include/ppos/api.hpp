#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ppos/error.hpp"

// Request/response layer shared by the command line and the HTTP service.
//
// A request is a flat JSON object whose keys transliterate the R function
// arguments (null.value -> "null-value", Z.crit.final -> "Z-crit-final").
// Unknown keys and keys that do not apply to the selected endpoint are
// schema errors. An optional "v" must equal kSchemaVersion.
namespace ppos::api {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

enum class KeyType { number, integer, string, boolean, number_list, integer_list };

struct KeySpec {
  std::string name;
  KeyType type;
  std::string help;
};

struct RunOptions {
  int threads = 1;
  std::int64_t betabinom_cap = 4'000'000;  // max indicator evaluations; <= 0 disables
  // succ-ia with n = N answers with the final success indicator instead of
  // a domain error. The CLI enables this; the service does not.
  bool allow_final_analysis = false;
};

// Subcommands in display order: pos, succ-ia, betabinom, curves, mc-se, mc-ppos.
const std::vector<std::string>& commands();

// Keys accepted by `command` (excluding "v").
const std::vector<KeySpec>& keys_for(std::string_view command);

// Runs one request. Throws ppos::Error on any failure.
Json run(std::string_view command, const Json& request, const RunOptions& options = {});

Json error_body(const Error& error);

// Sorted keys, shortest round-trip doubles, no whitespace.
std::string canonical(const Json& value);

int exit_code(ErrorCode code);
int http_status(ErrorCode code);

std::string version();

}  // namespace ppos::api
