#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace anonpsy {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed document; `path()` names the offending node, e.g. "symptoms[2].contexts".
class ParseError : public Error {
public:
    ParseError(std::string path, const std::string& what)
        : Error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class GatewayError : public Error {
public:
    GatewayError(std::string template_id, const std::string& what)
        : Error(template_id + ": " + what), template_id_(std::move(template_id)) {}
    const std::string& template_id() const noexcept { return template_id_; }

private:
    std::string template_id_;
};

/// Failure of a whole pipeline stage for one case; `trail()` lists the stages reached.
class StageError : public Error {
public:
    StageError(std::vector<std::string> trail, const std::string& what)
        : Error(what), trail_(std::move(trail)) {}
    const std::vector<std::string>& trail() const noexcept { return trail_; }

private:
    std::vector<std::string> trail_;
};

}  // namespace anonpsy
