#include "enroll/text.h"

#include <cctype>
#include <unordered_set>

namespace enroll {

namespace {

bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_alpha(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    enum class State { none, word, number } state = State::none;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
        state = State::none;
    };
    for (size_t i = 0; i < text.size(); ++i) {
        const unsigned char c = static_cast<unsigned char>(text[i]);
        if (is_alpha(c)) {
            if (state != State::word) flush();
            state = State::word;
            cur += static_cast<char>(std::tolower(c));
        } else if (is_digit(c)) {
            if (state != State::number) flush();
            state = State::number;
            cur += static_cast<char>(c);
        } else if (c == '.' && state == State::number && i + 1 < text.size() &&
                   is_digit(static_cast<unsigned char>(text[i + 1]))) {
            cur += '.';  // decimal point inside a number
        } else if (c == '%' || c == '/' || c == '<' || c == '>' || c == '=') {
            flush();
            out.emplace_back(1, static_cast<char>(c));
        } else if (c == 0xE2 && i + 2 < text.size() &&
                   static_cast<unsigned char>(text[i + 1]) == 0x89) {
            // UTF-8 ≤ (e2 89 a4) and ≥ (e2 89 a5)
            const unsigned char third = static_cast<unsigned char>(text[i + 2]);
            if (third == 0xA4 || third == 0xA5) {
                flush();
                out.push_back(text.substr(i, 3));
                i += 2;
            }
        } else {
            flush();
        }
    }
    flush();
    return out;
}

bool is_number_token(const std::string& tok) {
    if (tok.empty()) return false;
    bool dot = false;
    for (char c : tok) {
        if (c == '.') {
            if (dot) return false;
            dot = true;
        } else if (!is_digit(static_cast<unsigned char>(c))) {
            return false;
        }
    }
    return tok != ".";
}

bool is_stopword(const std::string& tok) {
    static const std::unordered_set<std::string> kStopwords = {
        "a",    "an",   "the",  "of",   "in",   "on",   "at",    "to",   "with", "for",
        "or",   "and",  "is",   "are",  "was",  "were", "be",    "been", "has",  "have",
        "had",  "per",  "than", "from", "by",   "as",   "that",  "this", "any",  "no",
        "not",  "must", "prior", "if"};
    return kStopwords.count(tok) > 0;
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace enroll
