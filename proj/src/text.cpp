#include "anonpsy/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace anonpsy::text {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

constexpr std::array<std::string_view, 14> kAbbreviations = {
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "e.g", "i.e", "etc", "approx", "no"};

bool ends_with_abbreviation(std::string_view sentence) {
    // sentence ends with '.', look at the word before it
    std::size_t end = sentence.size() - 1;
    std::size_t begin = end;
    while (begin > 0 && !is_space(sentence[begin - 1])) --begin;
    std::string word = to_lower(sentence.substr(begin, end - begin));
    while (!word.empty() && !is_alnum(word.front())) word.erase(word.begin());
    if (word.size() == 1 && std::isalpha(static_cast<unsigned char>(word[0]))) return true;  // initials
    return std::find(kAbbreviations.begin(), kAbbreviations.end(), word) != kAbbreviations.end();
}

}  // namespace

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), lower);
    return out;
}

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::string normalize_ws(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending = false;
    for (char c : s) {
        if (is_space(c)) {
            pending = !out.empty();
            continue;
        }
        if (pending) out.push_back(' ');
        pending = false;
        out.push_back(c);
    }
    return out;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (prefix.size() > s.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i)
        if (lower(s[i]) != lower(prefix[i])) return false;
    return true;
}

bool contains_ci(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return true;
    return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

bool contains_word_ci(std::string_view haystack, std::string_view phrase) {
    if (phrase.empty()) return false;
    const std::string h = to_lower(haystack);
    const std::string p = to_lower(phrase);
    for (std::size_t pos = h.find(p); pos != std::string::npos; pos = h.find(p, pos + 1)) {
        const bool left = pos == 0 || !is_alnum(h[pos - 1]);
        const std::size_t after = pos + p.size();
        const bool right = after >= h.size() || !is_alnum(h[after]);
        if (left && right) return true;
    }
    return false;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    if (from.empty()) return s;
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
        s.replace(pos, from.size(), to);
    return s;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::vector<std::string> split_sentences(std::string_view s) {
    std::vector<std::string> out;
    std::string current;
    for (std::size_t i = 0; i < s.size(); ++i) {
        current.push_back(s[i]);
        const char c = s[i];
        if (c != '.' && c != '!' && c != '?') continue;
        // absorb closing quotes/brackets
        while (i + 1 < s.size() && (s[i + 1] == '"' || s[i + 1] == '\'' || s[i + 1] == ')')) {
            current.push_back(s[++i]);
        }
        const bool boundary = i + 1 >= s.size() || is_space(s[i + 1]);
        if (!boundary) continue;
        if (c == '.' && ends_with_abbreviation(trim(current))) continue;
        std::string t = trim(current);
        if (!t.empty()) out.push_back(std::move(t));
        current.clear();
    }
    std::string t = trim(current);
    if (!t.empty()) out.push_back(std::move(t));
    return out;
}

std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (is_alnum(c)) {
            cur.push_back(lower(c));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::string spell_number(std::int64_t n) {
    static constexpr std::array<std::string_view, 13> kWords = {
        "zero", "one", "two", "three", "four", "five", "six",
        "seven", "eight", "nine", "ten", "eleven", "twelve"};
    if (n >= 0 && n <= 12) return std::string(kWords[static_cast<std::size_t>(n)]);
    return std::to_string(n);
}

std::string capitalize_first(std::string_view s) {
    std::string out(s);
    if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
    return out;
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace anonpsy::text
