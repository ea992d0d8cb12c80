#include "anonpsy/yaml_reader.hpp"

#include <algorithm>

#include "anonpsy/error.hpp"

namespace anonpsy::yaml {

namespace {

const Tree& empty_list() {
    static const Tree kEmpty = Tree::array();
    return kEmpty;
}

std::string type_name(const Tree& v) {
    if (v.is_null()) return "null";
    if (v.is_boolean()) return "boolean";
    if (v.is_number_integer()) return "integer";
    if (v.is_number()) return "number";
    if (v.is_string()) return "string";
    if (v.is_array()) return "sequence";
    return "mapping";
}

}  // namespace

std::string as_string(const Tree& v, const std::string& path) {
    if (v.is_string()) return v.get<std::string>();
    // plain scalars that happened to look numeric or boolean are still valid text
    if (v.is_number_integer() || v.is_boolean() || v.is_number_float()) return format_scalar(v);
    throw ParseError(path, "type mismatch: expected string, got " + type_name(v));
}

std::int64_t as_integer(const Tree& v, const std::string& path) {
    if (v.is_number_integer()) return v.get<std::int64_t>();
    throw ParseError(path, "type mismatch: expected integer, got " + type_name(v));
}

double as_real(const Tree& v, const std::string& path) {
    if (v.is_number()) return v.get<double>();
    throw ParseError(path, "type mismatch: expected number, got " + type_name(v));
}

bool as_boolean(const Tree& v, const std::string& path) {
    if (v.is_boolean()) return v.get<bool>();
    throw ParseError(path, "type mismatch: expected boolean, got " + type_name(v));
}

MapReader::MapReader(const Tree& node, std::string path,
                     std::initializer_list<std::string_view> allowed)
    : node_(node), path_(std::move(path)) {
    if (!node_.is_object())
        throw ParseError(path_, "type mismatch: expected mapping, got " + type_name(node_));
    for (auto it = node_.begin(); it != node_.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw ParseError(this->path(it.key()), "unknown key");
    }
}

bool MapReader::has(std::string_view key) const {
    auto it = node_.find(std::string(key));
    return it != node_.end() && !it->is_null();
}

std::string MapReader::path(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
}

const Tree& MapReader::child(std::string_view key) const {
    auto it = node_.find(std::string(key));
    if (it == node_.end()) throw ParseError(path(key), "missing key");
    return *it;
}

std::string MapReader::str(std::string_view key) const {
    const Tree& v = child(key);
    if (v.is_null()) throw ParseError(path(key), "missing value");
    return as_string(v, path(key));
}

std::string MapReader::str_or(std::string_view key, std::string fallback) const {
    return has(key) ? str(key) : fallback;
}

std::optional<std::string> MapReader::opt_str(std::string_view key) const {
    if (!has(key)) return std::nullopt;
    return str(key);
}

std::int64_t MapReader::integer(std::string_view key) const {
    return as_integer(child(key), path(key));
}

std::int64_t MapReader::integer_or(std::string_view key, std::int64_t fallback) const {
    return has(key) ? integer(key) : fallback;
}

double MapReader::real(std::string_view key) const { return as_real(child(key), path(key)); }

double MapReader::real_or(std::string_view key, double fallback) const {
    return has(key) ? real(key) : fallback;
}

bool MapReader::boolean(std::string_view key) const { return as_boolean(child(key), path(key)); }

bool MapReader::boolean_or(std::string_view key, bool fallback) const {
    return has(key) ? boolean(key) : fallback;
}

std::vector<std::string> MapReader::str_list(std::string_view key) const {
    std::vector<std::string> out;
    const Tree& v = list(key);
    for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(as_string(v[i], path(key) + "[" + std::to_string(i) + "]"));
    return out;
}

const Tree& MapReader::list(std::string_view key) const {
    if (!has(key)) return empty_list();
    const Tree& v = child(key);
    if (!v.is_array())
        throw ParseError(path(key), "type mismatch: expected sequence, got " + type_name(v));
    return v;
}

}  // namespace anonpsy::yaml
