#include "anonpsy/prompts.hpp"

#include <cctype>

#include "anonpsy/digest.hpp"
#include "anonpsy/error.hpp"

namespace anonpsy {

namespace detail {
const std::map<std::string, std::string>& prompt_assets();
}

namespace {

std::string strip_final_newline(std::string s) {
    if (!s.empty() && s.back() == '\n') s.pop_back();
    return s;
}

const std::map<std::string, PromptTemplate, std::less<>>& registry() {
    static const auto kRegistry = [] {
        std::map<std::string, PromptTemplate, std::less<>> out;
        for (const auto& [file, content] : detail::prompt_assets()) {
            const auto dot = file.find('.');
            const std::string id = file.substr(0, dot);
            const std::string part = file.substr(dot + 1);
            auto& t = out[id];
            t.id = id;
            if (part == "system.txt") t.system = strip_final_newline(content);
            else if (part == "user.txt") t.user = strip_final_newline(content);
        }
        return out;
    }();
    return kRegistry;
}

bool is_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

}  // namespace

const PromptTemplate& prompt_template(std::string_view id) {
    const auto& reg = registry();
    auto it = reg.find(id);
    if (it == reg.end()) throw Error("unknown prompt template '" + std::string(id) + "'");
    return it->second;
}

std::string render(std::string_view tmpl, const PromptVars& vars) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            std::size_t j = i + 1;
            while (j < tmpl.size() && is_ident_char(tmpl[j])) ++j;
            if (j > i + 1 && j < tmpl.size() && tmpl[j] == '}' &&
                !std::isdigit(static_cast<unsigned char>(tmpl[i + 1]))) {
                const std::string_view name = tmpl.substr(i + 1, j - i - 1);
                auto it = vars.find(name);
                if (it == vars.end())
                    throw Error("prompt placeholder '{" + std::string(name) + "}' has no value");
                out += it->second;
                i = j + 1;
                continue;
            }
        }
        out += tmpl[i++];
    }
    return out;
}

std::map<std::string, std::string> prompt_asset_hashes() {
    std::map<std::string, std::string> out;
    for (const auto& [file, content] : detail::prompt_assets()) out[file] = sha256_hex(content);
    return out;
}

}  // namespace anonpsy
