#pragma once

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "anonpsy/yaml.hpp"

namespace anonpsy::yaml {

/// Typed, path-aware access to one mapping node. Unknown keys are rejected at construction;
/// every failure is a ParseError naming the full key path.
class MapReader {
public:
    MapReader(const Tree& node, std::string path, std::initializer_list<std::string_view> allowed);

    bool has(std::string_view key) const;
    std::string path(std::string_view key) const;
    const Tree& child(std::string_view key) const;

    std::string str(std::string_view key) const;
    std::string str_or(std::string_view key, std::string fallback) const;
    std::optional<std::string> opt_str(std::string_view key) const;
    std::int64_t integer(std::string_view key) const;
    std::int64_t integer_or(std::string_view key, std::int64_t fallback) const;
    double real(std::string_view key) const;
    double real_or(std::string_view key, double fallback) const;
    bool boolean(std::string_view key) const;
    bool boolean_or(std::string_view key, bool fallback) const;
    std::vector<std::string> str_list(std::string_view key) const;
    /// Items of a sequence, empty when the key is absent.
    const Tree& list(std::string_view key) const;

private:
    const Tree& node_;
    std::string path_;
};

std::string as_string(const Tree& v, const std::string& path);
std::int64_t as_integer(const Tree& v, const std::string& path);
double as_real(const Tree& v, const std::string& path);
bool as_boolean(const Tree& v, const std::string& path);

}  // namespace anonpsy::yaml
