#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>

#include <json.hpp>

namespace anonpsy::yaml {

/// Document tree shared by every YAML artifact. Insertion order is emission order.
using Tree = nlohmann::ordered_json;

/// Deterministic block-style emitter: 2-space indent, LF endings, sequences indented under their
/// key, strings quoted only when a plain scalar would not read back as the same string.
/// Arrays of scalars under a key listed in `flow_keys` are written inline as `[a, b]`.
std::string emit(const Tree& doc, const std::set<std::string, std::less<>>& flow_keys = {});

/// Parses YAML into a Tree. Plain scalars become null/bool/integer/float when they look like one,
/// quoted scalars always stay strings. Throws ParseError on malformed input or duplicate keys.
Tree parse(std::string_view text);

/// Reads and parses a file; errors name the file.
Tree parse_file(const std::filesystem::path& path);

std::string format_scalar(const Tree& value);
bool needs_quotes(std::string_view s);

}  // namespace anonpsy::yaml
