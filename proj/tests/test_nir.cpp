#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "enroll/errors.h"
#include "enroll/nir.h"
#include "enroll/rng.h"
#include "enroll/text.h"
#include "test_util.h"

using namespace enroll;

namespace {

const UnitTable& units() {
    static UnitTable t = UnitTable::load(std::string(ENROLL_DATA_DIR) + "/units.json");
    return t;
}

const ComparatorLexicon& lexicon() {
    static ComparatorLexicon l =
        ComparatorLexicon::load(std::string(ENROLL_DATA_DIR) + "/comparators.json");
    return l;
}

}  // namespace

TEST_CASE("tokenizer rules") {
    CHECK(tokenize("more than 20 mg") == std::vector<std::string>{"more", "than", "20", "mg"});
    CHECK(tokenize("LVEF ≥ 50%") == std::vector<std::string>{"lvef", "≥", "50", "%"});
    CHECK(tokenize("") == std::vector<std::string>{});
    CHECK(tokenize("Hemoglobin: 12.5 g/dl!") ==
          std::vector<std::string>{"hemoglobin", "12.5", "g", "/", "dl"});
    CHECK(tokenize("20mg") == std::vector<std::string>{"20", "mg"});
    CHECK(tokenize("1st-degree") == std::vector<std::string>{"1", "st", "degree"});
    CHECK(tokenize("a ≤ b") == std::vector<std::string>{"a", "≤", "b"});
    CHECK(tokenize("x<5, y=2") == std::vector<std::string>{"x", "<", "5", "y", "=", "2"});
    CHECK(tokenize("3.") == std::vector<std::string>{"3"});  // trailing dot is punctuation
    CHECK(is_number_token("12.5"));
    CHECK(is_number_token("7"));
    CHECK_FALSE(is_number_token("1.2.3"));
    CHECK_FALSE(is_number_token("mg"));
}

TEST_CASE("fnv1a hashing is stable and bucket assignment deterministic") {
    CHECK(fnv1a("") == 14695981039346656037ULL);
    CHECK(fnv1a("a") == 12638187200555641996ULL);
    const uint64_t h = fnv1a("unseen-token");
    for (int i = 0; i < 5; ++i) CHECK(fnv1a("unseen-token") == h);
    CHECK(fnv1a("unseen-token") % 100 == h % 100);
}

TEST_CASE("unit table normalization") {
    auto mg = normalize(500, "mg", units());
    REQUIRE(mg.has_value());
    CHECK(mg->value == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(mg->dimension == "mass");

    auto weeks = normalize(2, "weeks", units());
    REQUIRE(weeks.has_value());
    CHECK(weeks->value == doctest::Approx(14.0).epsilon(1e-12));
    CHECK(weeks->dimension == "time");

    CHECK_FALSE(normalize(1, "zorgs", units()).has_value());

    SUBCASE("round-trip through the base unit") {
        Rng rng(3);
        for (const auto& e : units().entries()) {
            const double v = rng.uniform(0.1, 500.0);
            auto n = normalize(v, e.surface, units());
            REQUIRE(n.has_value());
            CHECK(std::fabs(n->value / e.scale - v) <= 1e-12 * std::max(1.0, std::fabs(v)));
        }
    }
}

TEST_CASE("comparator lexicon fixture") {
    CHECK(lexicon().written_number("twelve") == 12.0);
    CHECK(lexicon().written_number("one") == 1.0);
    CHECK_FALSE(lexicon().written_number("first").has_value());
    CHECK(lexicon().comparators().size() == 17);
    // longest phrase first
    CHECK(lexicon().comparators()[0].phrase.size() >= lexicon().comparators().back().phrase.size());
}

namespace {

struct GoldenTriple {
    Interval range;
    std::string unit;
    std::string concept_name;
};

bool triple_matches(const QuantityTriple& got, const GoldenTriple& want) {
    auto bound_eq = [](double a, double b) {
        if (std::isinf(a) || std::isinf(b)) return a == b;
        return std::fabs(a - b) <= 1e-12;
    };
    return bound_eq(got.range.lo, want.range.lo) && bound_eq(got.range.hi, want.range.hi) &&
           got.range.lo_open == want.range.lo_open && got.range.hi_open == want.range.hi_open &&
           got.unit == want.unit && got.concept_name == want.concept_name;
}

}  // namespace

TEST_CASE("golden extraction corpus") {
    std::ifstream is(std::string(ENROLL_GOLDEN_DIR) + "/nir_cases.jsonl");
    REQUIRE(is.good());
    std::string line;
    size_t cases = 0, matched = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        ++cases;
        auto j = nlohmann::json::parse(line);
        const std::string text = j.at("text").get<std::string>();
        std::vector<GoldenTriple> want;
        for (const auto& t : j.at("triples")) {
            GoldenTriple g;
            if (!t.at("lo").is_null()) g.range.lo = t.at("lo").get<double>();
            if (!t.at("hi").is_null()) g.range.hi = t.at("hi").get<double>();
            g.range.lo_open = t.at("lo_open").get<bool>();
            g.range.hi_open = t.at("hi_open").get<bool>();
            g.unit = t.at("unit").get<std::string>();
            g.concept_name = t.at("concept").get<std::string>();
            want.push_back(std::move(g));
        }
        auto got = extract_quantities(text, units(), lexicon());
        bool ok = got.size() == want.size();
        for (size_t i = 0; ok && i < got.size(); ++i) ok = triple_matches(got[i], want[i]);
        if (ok) {
            ++matched;
        } else {
            MESSAGE("golden mismatch on: \"" << text << "\" (got " << got.size() << " triples)");
            for (const auto& g : got)
                MESSAGE("  got [" << g.range.lo << (g.range.lo_open ? " open" : " closed") << ", "
                                  << g.range.hi << (g.range.hi_open ? " open" : " closed")
                                  << "] unit=" << g.unit << " concept=\"" << g.concept_name
                                  << "\"");
        }
    }
    CHECK(cases == 40);
    // exact-match rate over the corpus
    CHECK(matched >= 38);
    CHECK(matched == cases);  // current extractor reproduces every case
}

TEST_CASE("extraction is deterministic") {
    const std::string text = "age at least 18 years and hemoglobin at least 10 g/dl";
    auto a = extract_quantities(text, units(), lexicon());
    auto b = extract_quantities(text, units(), lexicon());
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].unit == b[i].unit);
        CHECK(a[i].concept_name == b[i].concept_name);
        CHECK(a[i].range.lo == b[i].range.lo);
        CHECK(a[i].range.hi == b[i].range.hi);
    }
}

TEST_CASE("compare_quantity base cases") {
    QuantityTriple q;
    q.range.lo = 20;
    q.range.lo_open = true;
    q.unit = "mg";
    CHECK(compare_quantity(q, 25, "mg", units()) == QuantityVerdict::entailment);
    CHECK(compare_quantity(q, 15, "mg", units()) == QuantityVerdict::contradiction);
    CHECK(compare_quantity(q, 20, "mg", units()) == QuantityVerdict::contradiction);  // open bound
    CHECK(compare_quantity(q, 3, "weeks", units()) == QuantityVerdict::not_comparable);
    CHECK(compare_quantity(q, 25, "zorgs", units()) == QuantityVerdict::not_comparable);

    // cross-unit within one dimension: 0.025 g = 25 mg
    CHECK(compare_quantity(q, 0.025, "g", units()) == QuantityVerdict::entailment);
    CHECK(compare_quantity(q, 0.015, "g", units()) == QuantityVerdict::contradiction);

    SUBCASE("closed bound includes the endpoint") {
        q.range.lo_open = false;
        CHECK(compare_quantity(q, 20, "mg", units()) == QuantityVerdict::entailment);
    }
    SUBCASE("dimensionless criterion reads the raw recorded value") {
        QuantityTriple ef;
        ef.range.hi = 40;
        ef.range.hi_open = false;
        ef.unit = "dimensionless";
        ef.concept_name = "ejection fraction";
        CHECK(compare_quantity(ef, 35, "%", units()) == QuantityVerdict::entailment);
        CHECK(compare_quantity(ef, 45, "%", units()) == QuantityVerdict::contradiction);
        CHECK(compare_quantity(ef, 45, "zorgs", units()) == QuantityVerdict::contradiction);
    }
}

namespace {

// Straight-line reference: unit lookup by linear scan, explicit bound checks.
QuantityVerdict oracle_compare(const QuantityTriple& ec, double val, const std::string& unit,
                               const std::vector<UnitEntry>& entries) {
    auto find = [&](const std::string& s) -> const UnitEntry* {
        for (const auto& e : entries)
            if (e.surface == s) return &e;
        return nullptr;
    };
    double v = val;
    double lo = ec.range.lo, hi = ec.range.hi;
    if (ec.unit != "dimensionless") {
        const UnitEntry* a = find(ec.unit);
        const UnitEntry* b = find(unit);
        if (a == nullptr || b == nullptr || a->dimension != b->dimension)
            return QuantityVerdict::not_comparable;
        v = val * b->scale;
        lo = lo * a->scale;
        hi = hi * a->scale;
    }
    const bool above_lo = ec.range.lo_open ? v > lo : v >= lo;
    const bool below_hi = ec.range.hi_open ? v < hi : v <= hi;
    return (above_lo && below_hi) ? QuantityVerdict::entailment : QuantityVerdict::contradiction;
}

}  // namespace

TEST_CASE("compare_quantity agrees with the brute-force oracle on 1000 random cases") {
    Rng rng(99);
    const auto& entries = units().entries();
    std::vector<std::string> unit_pool;
    for (const auto& e : entries) unit_pool.push_back(e.surface);
    unit_pool.push_back("zorgs");

    size_t comparable = 0;
    for (int it = 0; it < 1000; ++it) {
        QuantityTriple q;
        const int shape = static_cast<int>(rng.index(3));
        const double a = rng.uniform(-100.0, 100.0);
        const double b = rng.uniform(-100.0, 100.0);
        if (shape == 0) {  // lower bound only
            q.range.lo = std::min(a, b);
            q.range.lo_open = rng.bernoulli(0.5);
        } else if (shape == 1) {  // upper bound only
            q.range.hi = std::max(a, b);
            q.range.hi_open = rng.bernoulli(0.5);
        } else {  // both
            q.range.lo = std::min(a, b);
            q.range.hi = std::max(a, b);
            q.range.lo_open = rng.bernoulli(0.5);
            q.range.hi_open = rng.bernoulli(0.5);
        }
        q.unit = rng.bernoulli(0.2) ? "dimensionless" : rng.pick(unit_pool);
        if (q.unit == "zorgs") q.unit = "dimensionless";  // triple invariant: unit in table
        const double val = rng.bernoulli(0.1) ? (rng.bernoulli(0.5) ? q.range.lo : q.range.hi)
                                              : rng.uniform(-150.0, 150.0);
        const std::string ehr_unit = rng.pick(unit_pool);
        const QuantityVerdict got = compare_quantity(q, val, ehr_unit, units());
        const QuantityVerdict want = oracle_compare(q, val, ehr_unit, entries);
        REQUIRE(got == want);
        if (got != QuantityVerdict::not_comparable) ++comparable;
    }
    CHECK(comparable > 200);  // the sweep actually exercises comparisons
}

TEST_CASE("normalization consistency: mg criterion equals the same criterion in g") {
    Rng rng(17);
    for (int it = 0; it < 200; ++it) {
        QuantityTriple in_mg;
        in_mg.range.lo = rng.uniform(0.0, 100.0);
        in_mg.range.lo_open = rng.bernoulli(0.5);
        in_mg.unit = "mg";
        QuantityTriple in_g = in_mg;
        in_g.range.lo /= 1000.0;
        in_g.unit = "g";
        const double val = rng.uniform(0.0, 150.0);
        for (const char* u : {"mg", "g", "mcg", "kg"}) {
            CHECK(compare_quantity(in_mg, val, u, units()) ==
                  compare_quantity(in_g, val, u, units()));
        }
    }
}

TEST_CASE("raising an upper bound never turns entailment into contradiction") {
    Rng rng(23);
    for (int it = 0; it < 200; ++it) {
        QuantityTriple q;
        q.range.hi = rng.uniform(-50.0, 50.0);
        q.range.hi_open = rng.bernoulli(0.5);
        q.unit = "mg";
        const double val = rng.uniform(-100.0, 100.0);
        if (compare_quantity(q, val, "mg", units()) == QuantityVerdict::entailment) {
            q.range.hi += rng.uniform(0.1, 100.0);
            CHECK(compare_quantity(q, val, "mg", units()) == QuantityVerdict::entailment);
        }
    }
}

namespace {

PatientRecord patient_with(std::vector<Measurement> ms) {
    PatientRecord p;
    p.patient_id = "p1";
    p.demographics = {{"birth_year", "1970"}, {"gender", "male"},     {"country", "us"},
                      {"geo", "west"},        {"ethnicity", "groupb"}, {"blood_type", "a"}};
    Visit v;
    v.visit_id = "v1";
    v.date = "2020-01-01";
    v.diagnosis = "diagx";
    v.measurements = std::move(ms);
    p.visits.push_back(std::move(v));
    return p;
}

}  // namespace

TEST_CASE("quantity_match conjunction with vacuous truth") {
    std::vector<ECStatement> no_numbers{{"s1", StatementKind::inclusion, "history of migraines"}};
    CHECK(quantity_match(no_numbers, patient_with({}), units(), lexicon()) ==
          QuantityVerdict::entailment);

    std::vector<ECStatement> hb{{"s1", StatementKind::inclusion, "hemoglobin at least 10 g/dl"}};
    CHECK(quantity_match(hb, patient_with({{"hemoglobin", 12, "g/dl", true}}), units(),
                         lexicon()) == QuantityVerdict::entailment);
    CHECK(quantity_match(hb, patient_with({{"hemoglobin", 9, "g/dl", true}}), units(),
                         lexicon()) == QuantityVerdict::contradiction);

    SUBCASE("cross-unit comparison: 95 g/l fails a 10 g/dl floor") {
        CHECK(quantity_match(hb, patient_with({{"hemoglobin", 95, "g/l", true}}), units(),
                             lexicon()) == QuantityVerdict::contradiction);
        CHECK(quantity_match(hb, patient_with({{"hemoglobin", 105, "g/l", true}}), units(),
                             lexicon()) == QuantityVerdict::entailment);
    }
    SUBCASE("unmatched concept is vacuous") {
        CHECK(quantity_match(hb, patient_with({{"glucose", 90, "mg/dl", true}}), units(),
                             lexicon()) == QuantityVerdict::entailment);
    }
    SUBCASE("incomparable dimension is skipped") {
        CHECK(quantity_match(hb, patient_with({{"hemoglobin", 3, "weeks", true}}), units(),
                             lexicon()) == QuantityVerdict::entailment);
    }
    SUBCASE("one bad pair poisons the conjunction") {
        std::vector<ECStatement> both{
            {"s1", StatementKind::inclusion, "hemoglobin at least 10 g/dl"},
            {"s2", StatementKind::inclusion, "age at least 18 years"}};
        CHECK(quantity_match(both,
                             patient_with({{"hemoglobin", 12, "g/dl", true},
                                           {"age", 15, "years", true}}),
                             units(), lexicon()) == QuantityVerdict::contradiction);
    }
}

TEST_CASE("exclusion statements invert the pair verdict") {
    std::vector<ECStatement> excl{
        {"s1", StatementKind::exclusion, "glucose over 250 mg/dl"}};
    // inside the excluded range -> the patient is ruled out
    CHECK(quantity_match(excl, patient_with({{"glucose", 300, "mg/dl", true}}), units(),
                         lexicon()) == QuantityVerdict::contradiction);
    // outside the excluded range -> fine
    CHECK(quantity_match(excl, patient_with({{"glucose", 120, "mg/dl", true}}), units(),
                         lexicon()) == QuantityVerdict::entailment);
}

TEST_CASE("verdict names") {
    CHECK(std::string(verdict_name(QuantityVerdict::entailment)) == "entailment");
    CHECK(std::string(verdict_name(QuantityVerdict::contradiction)) == "contradiction");
    CHECK(std::string(verdict_name(QuantityVerdict::not_comparable)) == "not_comparable");
}

TEST_CASE("fixture loading errors") {
    CHECK_THROWS_AS(UnitTable::load("/no/such/file.json"), DataError);
    CHECK_THROWS_AS(ComparatorLexicon::load("/no/such/file.json"), DataError);
}
