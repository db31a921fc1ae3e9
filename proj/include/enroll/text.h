#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace enroll {

// Lowercases and splits on whitespace/punctuation. Numbers (with decimal
// points), the comparison symbols ≤ ≥ < > =, '%', and '/' survive as
// standalone tokens; digit/letter boundaries split ("20mg" -> "20", "mg",
// "1st" -> "1", "st").
std::vector<std::string> tokenize(const std::string& text);

bool is_number_token(const std::string& tok);

// Small function-word list shared by concept attachment and concept overlap.
bool is_stopword(const std::string& tok);

// FNV-1a, used for hash-bucketing out-of-vocabulary tokens; stable across
// platforms, unlike std::hash.
uint64_t fnv1a(const std::string& s);

}  // namespace enroll
