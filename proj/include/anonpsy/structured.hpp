#pragma once

#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace anonpsy {

using Json = nlohmann::json;

/// Parses the JSON object in a model reply, tolerating code fences and text around the outermost
/// braces. Throws Error when no object can be parsed.
Json parse_json_reply(std::string_view text);

/// Drops keys of `obj` outside `allowed`, recording one warning per dropped key.
void drop_unknown_keys(Json& obj, std::initializer_list<std::string_view> allowed, const std::string& path,
                       std::vector<std::string>& warnings);

/// String value of `obj[key]`: strings as-is, numbers and booleans formatted, null/absent as nullopt.
std::optional<std::string> json_text(const Json& obj, std::string_view key);

}  // namespace anonpsy
