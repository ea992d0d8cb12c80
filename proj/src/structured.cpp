#include "anonpsy/structured.hpp"

#include <algorithm>

#include "anonpsy/error.hpp"

namespace anonpsy {

Json parse_json_reply(std::string_view text) {
    const auto open = text.find('{');
    const auto close = text.rfind('}');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open)
        throw Error("reply contains no JSON object");
    Json value = Json::parse(text.substr(open, close - open + 1), nullptr, false);
    if (value.is_discarded() || !value.is_object()) throw Error("reply is not a valid JSON object");
    return value;
}

void drop_unknown_keys(Json& obj, std::initializer_list<std::string_view> allowed, const std::string& path,
                       std::vector<std::string>& warnings) {
    if (!obj.is_object()) return;
    std::vector<std::string> unknown;
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) unknown.push_back(it.key());
    for (const auto& k : unknown) {
        warnings.push_back(path + ": dropped unknown field '" + k + "'");
        obj.erase(k);
    }
}

std::optional<std::string> json_text(const Json& obj, std::string_view key) {
    if (!obj.is_object()) return std::nullopt;
    auto it = obj.find(std::string(key));
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (it->is_string()) return it->get<std::string>();
    if (it->is_boolean()) return it->get<bool>() ? "true" : "false";
    if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
    if (it->is_number()) return it->dump();
    return std::nullopt;
}

}  // namespace anonpsy
