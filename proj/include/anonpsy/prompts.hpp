#pragma once

#include <map>
#include <string>
#include <string_view>

namespace anonpsy {

using PromptVars = std::map<std::string, std::string, std::less<>>;

/// A versioned prompt: optional system part plus user part, both with `{name}` placeholders.
struct PromptTemplate {
    std::string id;
    std::string system;
    std::string user;
};

/// Looks up an embedded template by id; throws Error for unknown ids.
const PromptTemplate& prompt_template(std::string_view id);

/// Replaces every `{identifier}` with its value. A brace not followed by an identifier and a closing
/// brace is literal text. Throws Error naming the placeholder when a value is missing.
std::string render(std::string_view tmpl, const PromptVars& vars);

/// SHA-256 of every embedded asset file, keyed by file name.
std::map<std::string, std::string> prompt_asset_hashes();

}  // namespace anonpsy
