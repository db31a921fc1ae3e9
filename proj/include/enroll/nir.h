#pragma once

#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "enroll/data.h"

namespace enroll {

// Interval over the reals with open/closed bounds; infinities allowed (an
// infinite bound is always open).
struct Interval {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    bool lo_open = true;
    bool hi_open = true;

    bool contains(double v) const {
        if (lo_open ? !(v > lo) : !(v >= lo)) return false;
        if (hi_open ? !(v < hi) : !(v <= hi)) return false;
        return true;
    }
};

// "unit" is the surface form as written ("mg", "weeks"); conversion to the
// base unit happens at comparison time, not extraction time. "dimensionless"
// marks a bare number.
struct QuantityTriple {
    Interval range;
    std::string unit = "dimensionless";
    std::string concept_name;
};

struct UnitEntry {
    std::string surface;
    std::string dimension;
    double scale = 1.0;  // multiply by this to reach the base unit
    std::string base;
};

class UnitTable {
  public:
    static UnitTable load(const std::string& path);

    const UnitEntry* find(const std::string& surface) const;
    bool has(const std::string& surface) const { return find(surface) != nullptr; }
    std::unordered_set<std::string> surfaces() const;
    size_t size() const { return entries_.size(); }
    const std::vector<UnitEntry>& entries() const { return entries_; }

  private:
    std::vector<UnitEntry> entries_;
    std::unordered_map<std::string, size_t> index_;
};

struct Normalized {
    double value = 0.0;
    std::string dimension;
};

// Unknown unit -> nullopt (callers map it to not_comparable).
std::optional<Normalized> normalize(double value, const std::string& unit, const UnitTable& table);

enum class QuantityVerdict { entailment, contradiction, not_comparable };

const char* verdict_name(QuantityVerdict v);

// Comparator lexicon + written-number list, loaded from a data file so tests
// can pin the exact phrase set.
struct Comparator {
    std::vector<std::string> phrase;  // token sequence
    enum class Type { lower, upper, point } type = Type::lower;
    bool open = true;
};

class ComparatorLexicon {
  public:
    static ComparatorLexicon load(const std::string& path);

    const std::vector<Comparator>& comparators() const { return comparators_; }
    std::optional<double> written_number(const std::string& token) const;

  private:
    std::vector<Comparator> comparators_;
    std::unordered_map<std::string, double> written_numbers_;
};

// Best-effort quantity extraction: comparator phrase, then a number (digits or
// written), then an optional unit (surface or a/b slash form); ordinals (1st,
// 2nd, ...) are skipped. Concept = nearest content tokens, preferring the ones
// just before the comparator.
std::vector<QuantityTriple> extract_quantities(const std::string& text, const UnitTable& units,
                                               const ComparatorLexicon& lex);

// Dimension check, then range membership after converting both sides to the
// base unit. A dimensionless EC range compares against the raw recorded value
// whatever the measurement's unit, so "score <= 40" can face a "%" reading.
QuantityVerdict compare_quantity(const QuantityTriple& ec, double ehr_value,
                                 const std::string& ehr_unit, const UnitTable& table);

// The Quantity Match predicate: extract triples from every statement, pair
// each against measurements with overlapping concept tokens and a comparable
// dimension, and conjoin. Pairs under an exclusion statement flip
// entailment/contradiction, since a value inside an excluded range disqualifies
// the patient. No matched pair contradicting -> entailment (vacuously true
// when nothing is numeric).
QuantityVerdict quantity_match(const std::vector<ECStatement>& statements,
                               const PatientRecord& patient, const UnitTable& table,
                               const ComparatorLexicon& lex);

}  // namespace enroll
