#pragma once

#include <string>
#include <string_view>
#include <utility>

#include "anonpsy/error.hpp"
#include "anonpsy/graph.hpp"
#include "anonpsy/yaml.hpp"

namespace anonpsy {

/// Raised when serialization is asked to write a graph that fails validation.
class InvalidGraphError : public Error {
public:
    explicit InvalidGraphError(ValidationReport report)
        : Error("graph failed validation:\n" + format_report(report)), report_(std::move(report)) {}
    const ValidationReport& report() const noexcept { return report_; }

private:
    ValidationReport report_;
};

yaml::Tree graph_to_tree(const SemanticGraph& g);
SemanticGraph graph_from_tree(const yaml::Tree& doc);

/// Canonical YAML text. Node lists, relations and durations are written in sorted order so equal
/// graphs give identical bytes. Throws InvalidGraphError when validate_graph reports violations.
std::string serialize_yaml(const SemanticGraph& g);

/// Inverse of serialize_yaml. Unknown keys, type mismatches and malformed durations raise
/// ParseError naming the key path.
SemanticGraph parse_yaml(std::string_view text);

yaml::Tree steb_to_tree(const StebContext& ctx);

}  // namespace anonpsy
