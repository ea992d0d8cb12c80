#include "anonpsy/yaml.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "anonpsy/error.hpp"
#include "anonpsy/text.hpp"

namespace anonpsy::yaml {

namespace {

const std::regex& number_like() {
    static const std::regex re(
        R"(^[-+]?(\.[0-9]+|[0-9]+(\.[0-9]*)?)([eE][-+]?[0-9]+)?$|^0x[0-9a-fA-F]+$|^0o[0-7]+$|^[-+]?\.(inf|Inf|INF)$|^\.(nan|NaN|NAN)$)");
    return re;
}

bool is_reserved_word(std::string_view s) {
    static const std::set<std::string, std::less<>> kWords = {
        "null", "~", "true", "false", "yes", "no", "on", "off", "y", "n"};
    return kWords.count(text::to_lower(s)) > 0;
}

std::string quote(std::string_view s) {
    std::string out = "\"";
    for (unsigned char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if (c < 0x20 || c == 0x7f) {
                    static const char* hex = "0123456789abcdef";
                    out += "\\x";
                    out += hex[c >> 4];
                    out += hex[c & 0xf];
                } else {
                    out += static_cast<char>(c);
                }
        }
    }
    out += '"';
    return out;
}

std::string format_float(double v) {
    if (std::isnan(v)) return ".nan";
    if (std::isinf(v)) return v > 0 ? ".inf" : "-.inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, res.ptr);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

bool is_scalar(const Tree& v) { return !v.is_object() && !v.is_array(); }

std::string scalar_text(const Tree& v, bool in_flow) {
    if (v.is_string()) {
        const auto& s = v.get_ref<const std::string&>();
        if (needs_quotes(s) || (in_flow && s.find_first_of(",[]{}") != std::string::npos))
            return quote(s);
        return s;
    }
    return format_scalar(v);
}

class Emitter {
public:
    explicit Emitter(const std::set<std::string, std::less<>>& flow) : flow_(flow) {}

    void map(const Tree& obj, int indent) {
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            pad(indent);
            out_ += key(it.key());
            out_ += ':';
            after_key(it.key(), it.value(), indent);
        }
    }

    void seq(const Tree& arr, int indent) {
        for (const auto& item : arr) {
            pad(indent);
            if (item.is_object() && !item.empty()) {
                out_ += "- ";
                bool first = true;
                for (auto it = item.begin(); it != item.end(); ++it) {
                    if (!first) pad(indent + 2);
                    first = false;
                    out_ += key(it.key());
                    out_ += ':';
                    after_key(it.key(), it.value(), indent + 2);
                }
            } else if (item.is_array() && !item.empty()) {
                out_ += "-\n";
                seq(item, indent + 2);
            } else {
                out_ += "- ";
                out_ += inline_value(item);
                out_ += '\n';
            }
        }
    }

    std::string take() { return std::move(out_); }

private:
    void after_key(const std::string& k, const Tree& v, int indent) {
        if (v.is_object() && !v.empty()) {
            out_ += '\n';
            map(v, indent + 2);
        } else if (v.is_array() && !v.empty()) {
            const bool all_scalar = std::all_of(v.begin(), v.end(), is_scalar);
            if (all_scalar && flow_.count(k)) {
                out_ += " [";
                bool first = true;
                for (const auto& item : v) {
                    if (!first) out_ += ", ";
                    first = false;
                    out_ += scalar_text(item, true);
                }
                out_ += "]\n";
            } else {
                out_ += '\n';
                seq(v, indent + 2);
            }
        } else {
            out_ += ' ';
            out_ += inline_value(v);
            out_ += '\n';
        }
    }

    static std::string inline_value(const Tree& v) {
        if (v.is_object()) return "{}";
        if (v.is_array()) return "[]";
        return scalar_text(v, false);
    }

    static std::string key(const std::string& k) { return needs_quotes(k) ? quote(k) : k; }

    void pad(int n) { out_.append(static_cast<std::size_t>(n), ' '); }

    const std::set<std::string, std::less<>>& flow_;
    std::string out_;
};

Tree convert(const YAML::Node& node, const std::string& path) {
    switch (node.Type()) {
        case YAML::NodeType::Undefined:
        case YAML::NodeType::Null:
            return nullptr;
        case YAML::NodeType::Scalar: {
            const std::string& s = node.Scalar();
            if (node.Tag() == "!") return s;  // quoted
            if (s.empty() || s == "~" || s == "null" || s == "Null" || s == "NULL") return nullptr;
            if (s == "true" || s == "True" || s == "TRUE") return true;
            if (s == "false" || s == "False" || s == "FALSE") return false;
            if (std::regex_match(s, std::regex(R"(^[-+]?[0-9]+$)"))) {
                std::int64_t v = 0;
                const char* b = s.data() + (s[0] == '+' ? 1 : 0);
                auto res = std::from_chars(b, s.data() + s.size(), v);
                if (res.ec == std::errc() && res.ptr == s.data() + s.size()) return v;
                throw ParseError(path, "integer out of range: " + s);
            }
            if (std::regex_match(s, std::regex(R"(^[-+]?(\.[0-9]+|[0-9]+\.[0-9]*|[0-9]+(\.[0-9]*)?[eE][-+]?[0-9]+)$)")))
                return std::stod(s);
            return s;
        }
        case YAML::NodeType::Sequence: {
            Tree arr = Tree::array();
            std::size_t i = 0;
            for (const auto& item : node) arr.push_back(convert(item, path + "[" + std::to_string(i++) + "]"));
            return arr;
        }
        case YAML::NodeType::Map: {
            Tree obj = Tree::object();
            for (const auto& kv : node) {
                if (!kv.first.IsScalar()) throw ParseError(path, "mapping keys must be scalars");
                const std::string k = kv.first.Scalar();
                const std::string child = path.empty() ? k : path + "." + k;
                if (obj.contains(k)) throw ParseError(child, "duplicate key");
                obj[k] = convert(kv.second, child);
            }
            return obj;
        }
    }
    return nullptr;
}

}  // namespace

bool needs_quotes(std::string_view s) {
    if (s.empty()) return true;
    if (std::isspace(static_cast<unsigned char>(s.front())) ||
        std::isspace(static_cast<unsigned char>(s.back())))
        return true;
    static constexpr std::string_view kLeading = "-?:,[]{}#&*!|>'\"%@`.";
    if (kLeading.find(s.front()) != std::string_view::npos) return true;
    if (s.back() == ':') return true;
    if (s.find(": ") != std::string_view::npos || s.find(" #") != std::string_view::npos) return true;
    for (unsigned char c : s)
        if (c < 0x20 || c == 0x7f) return true;
    if (is_reserved_word(s)) return true;
    if (std::regex_match(s.begin(), s.end(), number_like())) return true;
    return false;
}

std::string format_scalar(const Tree& v) {
    if (v.is_null()) return "null";
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return v.dump();
    if (v.is_number_float()) return format_float(v.get<double>());
    if (v.is_string()) {
        const auto& s = v.get_ref<const std::string&>();
        return needs_quotes(s) ? quote(s) : s;
    }
    return v.dump();
}

std::string emit(const Tree& doc, const std::set<std::string, std::less<>>& flow_keys) {
    Emitter e(flow_keys);
    if (doc.is_object()) {
        e.map(doc, 0);
    } else if (doc.is_array()) {
        e.seq(doc, 0);
    } else {
        return format_scalar(doc) + "\n";
    }
    return e.take();
}

Tree parse(std::string_view text) {
    YAML::Node root;
    try {
        root = YAML::Load(std::string(text));
    } catch (const YAML::Exception& ex) {
        throw ParseError("", std::string("malformed YAML: ") + ex.what());
    }
    return convert(root, "");
}

}  // namespace anonpsy::yaml

namespace anonpsy::yaml {

Tree parse_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path.string(), "cannot read file");
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(path.string(), e.what());
    }
}

}  // namespace anonpsy::yaml
