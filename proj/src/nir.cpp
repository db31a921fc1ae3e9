#include "enroll/nir.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "enroll/errors.h"
#include "enroll/text.h"

namespace enroll {

using nlohmann::json;

UnitTable UnitTable::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open unit table: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    if (!j.is_array()) throw DataError(path + ": unit table must be a JSON array");
    UnitTable t;
    for (const auto& e : j) {
        UnitEntry u;
        u.surface = e.at("surface").get<std::string>();
        u.dimension = e.at("dimension").get<std::string>();
        u.scale = e.at("scale").get<double>();
        u.base = e.at("base").get<std::string>();
        if (u.scale <= 0.0)
            throw DataError(path + ": unit " + u.surface + " has non-positive scale");
        if (t.index_.count(u.surface))
            throw DataError(path + ": duplicate unit surface " + u.surface);
        t.index_.emplace(u.surface, t.entries_.size());
        t.entries_.push_back(std::move(u));
    }
    return t;
}

const UnitEntry* UnitTable::find(const std::string& surface) const {
    auto it = index_.find(surface);
    return it == index_.end() ? nullptr : &entries_[it->second];
}

std::unordered_set<std::string> UnitTable::surfaces() const {
    std::unordered_set<std::string> out;
    for (const auto& e : entries_) out.insert(e.surface);
    return out;
}

std::optional<Normalized> normalize(double value, const std::string& unit,
                                    const UnitTable& table) {
    const UnitEntry* e = table.find(unit);
    if (e == nullptr) return std::nullopt;
    return Normalized{value * e->scale, e->dimension};
}

const char* verdict_name(QuantityVerdict v) {
    switch (v) {
        case QuantityVerdict::entailment: return "entailment";
        case QuantityVerdict::contradiction: return "contradiction";
        case QuantityVerdict::not_comparable: return "not_comparable";
    }
    return "?";
}

ComparatorLexicon ComparatorLexicon::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open comparator lexicon: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    ComparatorLexicon lex;
    for (const auto& c : j.at("comparators")) {
        Comparator cmp;
        cmp.phrase = tokenize(c.at("phrase").get<std::string>());
        if (cmp.phrase.empty()) throw DataError(path + ": empty comparator phrase");
        const std::string type = c.at("type").get<std::string>();
        if (type == "lower") cmp.type = Comparator::Type::lower;
        else if (type == "upper") cmp.type = Comparator::Type::upper;
        else if (type == "point") cmp.type = Comparator::Type::point;
        else throw DataError(path + ": unknown comparator type " + type);
        cmp.open = c.at("open").get<bool>();
        lex.comparators_.push_back(std::move(cmp));
    }
    for (const auto& [word, value] : j.at("written_numbers").items())
        lex.written_numbers_.emplace(word, value.get<double>());
    // longest phrase first so "greater than or equal to" beats "greater than"
    std::stable_sort(lex.comparators_.begin(), lex.comparators_.end(),
                     [](const Comparator& a, const Comparator& b) {
                         return a.phrase.size() > b.phrase.size();
                     });
    return lex;
}

std::optional<double> ComparatorLexicon::written_number(const std::string& token) const {
    auto it = written_numbers_.find(token);
    if (it == written_numbers_.end()) return std::nullopt;
    return it->second;
}

namespace {

bool is_ordinal_suffix(const std::string& tok) {
    return tok == "st" || tok == "nd" || tok == "rd" || tok == "th";
}

// Matches a unit at tokens[i]: either a single surface form or the three-token
// slash form a/b reassembled ("g","/","dl" -> "g/dl"). Returns tokens consumed.
size_t match_unit(const std::vector<std::string>& toks, size_t i, const UnitTable& units,
                  std::string* out) {
    if (i >= toks.size()) return 0;
    if (i + 2 < toks.size() && toks[i + 1] == "/") {
        const std::string joined = toks[i] + "/" + toks[i + 2];
        if (units.has(joined)) {
            *out = joined;
            return 3;
        }
    }
    if (units.has(toks[i])) {
        *out = toks[i];
        return 1;
    }
    return 0;
}

bool is_content_token(const std::string& tok, const UnitTable& units,
                      const ComparatorLexicon& lex) {
    if (is_number_token(tok) || is_stopword(tok)) return false;
    if (tok == "%" || tok == "/" || tok == "<" || tok == ">" || tok == "=") return false;
    if (tok == "≤" || tok == "≥") return false;
    if (units.has(tok)) return false;
    if (lex.written_number(tok).has_value()) return false;
    for (const auto& c : lex.comparators())
        if (c.phrase.size() == 1 && c.phrase[0] == tok) return false;
    return true;
}

// Nearest content tokens: walk left from the comparator, skip function words,
// then take the contiguous content run (e.g. "ejection fraction ≤ 40" ->
// "ejection fraction"). Falls back to the first content run after the
// quantity.
std::string attach_concept(const std::vector<std::string>& toks, size_t cmp_begin,
                           size_t after_quantity, const UnitTable& units,
                           const ComparatorLexicon& lex) {
    const size_t kMaxWords = 3;
    std::vector<std::string> picked;
    size_t i = cmp_begin;
    while (i > 0 && is_stopword(toks[i - 1])) --i;
    while (i > 0 && is_content_token(toks[i - 1], units, lex) && picked.size() < kMaxWords) {
        picked.push_back(toks[i - 1]);
        --i;
    }
    std::reverse(picked.begin(), picked.end());
    if (picked.empty()) {
        size_t k = after_quantity;
        while (k < toks.size() && !is_content_token(toks[k], units, lex)) ++k;
        while (k < toks.size() && is_content_token(toks[k], units, lex) &&
               picked.size() < kMaxWords) {
            picked.push_back(toks[k]);
            ++k;
        }
    }
    std::string out;
    for (size_t w = 0; w < picked.size(); ++w) {
        if (w) out += ' ';
        out += picked[w];
    }
    return out;
}

}  // namespace

std::vector<QuantityTriple> extract_quantities(const std::string& text, const UnitTable& units,
                                               const ComparatorLexicon& lex) {
    const std::vector<std::string> toks = tokenize(text);
    std::vector<QuantityTriple> out;
    size_t i = 0;
    while (i < toks.size()) {
        // find a comparator phrase starting at i (lexicon is longest-first)
        const Comparator* cmp = nullptr;
        size_t cmp_len = 0;
        for (const auto& c : lex.comparators()) {
            if (i + c.phrase.size() > toks.size()) continue;
            if (std::equal(c.phrase.begin(), c.phrase.end(), toks.begin() + static_cast<long>(i))) {
                cmp = &c;
                cmp_len = c.phrase.size();
                break;
            }
        }
        if (cmp == nullptr) {
            ++i;
            continue;
        }
        // the number must follow within a couple of tokens
        const size_t window_end = std::min(toks.size(), i + cmp_len + 3);
        size_t num_pos = toks.size();
        double value = 0.0;
        for (size_t k = i + cmp_len; k < window_end; ++k) {
            if (is_number_token(toks[k])) {
                // ordinals are positions, not quantities
                if (k + 1 < toks.size() && is_ordinal_suffix(toks[k + 1])) break;
                value = std::stod(toks[k]);
                num_pos = k;
                break;
            }
            if (auto w = lex.written_number(toks[k])) {
                value = *w;
                num_pos = k;
                break;
            }
        }
        if (num_pos == toks.size()) {
            i += cmp_len;
            continue;
        }
        QuantityTriple q;
        std::string unit;
        size_t after = num_pos + 1;
        if (size_t used = match_unit(toks, num_pos + 1, units, &unit)) {
            q.unit = unit;
            after = num_pos + 1 + used;
        } else if (num_pos + 1 < toks.size() && toks[num_pos + 1] == "%") {
            q.unit = "%";
            after = num_pos + 2;
        }
        switch (cmp->type) {
            case Comparator::Type::lower:
                q.range.lo = value;
                q.range.lo_open = cmp->open;
                break;
            case Comparator::Type::upper:
                q.range.hi = value;
                q.range.hi_open = cmp->open;
                break;
            case Comparator::Type::point:
                q.range.lo = q.range.hi = value;
                q.range.lo_open = q.range.hi_open = false;
                break;
        }
        q.concept_name = attach_concept(toks, i, after, units, lex);
        out.push_back(std::move(q));
        i = after;
    }
    return out;
}

QuantityVerdict compare_quantity(const QuantityTriple& ec, double ehr_value,
                                 const std::string& ehr_unit, const UnitTable& table) {
    if (ec.unit == "dimensionless") {
        // a bare number in the criterion faces the value exactly as recorded
        return ec.range.contains(ehr_value) ? QuantityVerdict::entailment
                                            : QuantityVerdict::contradiction;
    }
    const UnitEntry* eu = table.find(ec.unit);
    if (eu == nullptr) return QuantityVerdict::not_comparable;
    auto hv = normalize(ehr_value, ehr_unit, table);
    if (!hv.has_value() || hv->dimension != eu->dimension) return QuantityVerdict::not_comparable;
    Interval scaled = ec.range;
    if (std::isfinite(scaled.lo)) scaled.lo *= eu->scale;
    if (std::isfinite(scaled.hi)) scaled.hi *= eu->scale;
    return scaled.contains(hv->value) ? QuantityVerdict::entailment
                                      : QuantityVerdict::contradiction;
}

namespace {

std::vector<std::string> content_tokens(const std::string& text) {
    std::vector<std::string> out;
    for (const auto& t : tokenize(text))
        if (!is_stopword(t) && !is_number_token(t)) out.push_back(t);
    return out;
}

bool concepts_overlap(const std::string& a, const std::string& b) {
    const auto ta = content_tokens(a);
    const auto tb = content_tokens(b);
    for (const auto& x : ta)
        for (const auto& y : tb)
            if (x == y) return true;
    return false;
}

}  // namespace

QuantityVerdict quantity_match(const std::vector<ECStatement>& statements,
                               const PatientRecord& patient, const UnitTable& table,
                               const ComparatorLexicon& lex) {
    for (const auto& st : statements) {
        for (const QuantityTriple& q : extract_quantities(st.text, table, lex)) {
            for (const auto& visit : patient.visits) {
                for (const Measurement& m : visit.measurements) {
                    if (!concepts_overlap(q.concept_name, m.concept_name)) continue;
                    QuantityVerdict v = compare_quantity(q, m.value, m.unit, table);
                    if (v == QuantityVerdict::not_comparable) continue;
                    // an exclusion range works in reverse: a value inside it
                    // rules the patient out
                    if (st.kind == StatementKind::exclusion) {
                        v = v == QuantityVerdict::entailment ? QuantityVerdict::contradiction
                                                             : QuantityVerdict::entailment;
                    }
                    if (v == QuantityVerdict::contradiction) return QuantityVerdict::contradiction;
                }
            }
        }
    }
    return QuantityVerdict::entailment;
}

}  // namespace enroll
