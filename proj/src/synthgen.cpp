#include "enroll/synthgen.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "enroll/errors.h"

namespace enroll {

namespace {

// ---------------------------------------------------------------- word pools

// Deterministic digit-free pseudowords: n is written base-24 in syllables, so
// distinct n < 24^3 give distinct words. Code pools, condition names, and
// overflow concepts live in disjoint n ranges.
std::string pseudoword(size_t n) {
    static const char* kSyl[24] = {"ba", "be", "bi", "bo", "bu", "da", "de", "di",
                                   "do", "du", "fa", "fe", "fi", "fo", "ka", "ke",
                                   "ki", "ko", "ma", "me", "mi", "mo", "na", "ne"};
    std::string w;
    w += kSyl[n % 24];
    w += kSyl[(n / 24) % 24];
    w += kSyl[(n / 576) % 24];
    return w;
}

std::string diag_code(const GenConfig& cfg, size_t domain, size_t i) {
    return pseudoword(100 + domain * cfg.diag_per_domain + i);
}

std::string treat_code(const GenConfig& cfg, size_t domain, size_t i) {
    return pseudoword(4000 + domain * cfg.treat_per_domain + i);
}

struct ConceptSpec {
    std::string name;
    std::string unit;
    double lo = 0.0, hi = 0.0;  // plausible range, 1-decimal endpoints
};

// Three measurement concepts per domain. Within a domain the concept names
// share no tokens, so quantity pairing can never cross wires; domains past
// the named table fall back to pseudowords.
const ConceptSpec kNamedConcepts[30] = {
    {"hemoglobin", "g/dl", 6.0, 18.0},
    {"glucose", "mg/dl", 60.0, 300.0},
    {"ejection fraction", "%", 15.0, 75.0},
    {"ldl cholesterol", "mg/dl", 40.0, 220.0},
    {"heart rate", "bpm", 40.0, 140.0},
    {"alt", "u/l", 5.0, 150.0},
    {"oxygen saturation", "%", 80.0, 100.0},
    {"platelet count", "k/ul", 40.0, 450.0},
    {"ferritin", "ng/ml", 5.0, 600.0},
    {"systolic blood pressure", "mmhg", 85.0, 200.0},
    {"white cell count", "k/ul", 2.0, 20.0},
    {"uric acid", "mg/dl", 2.0, 10.0},
    {"total cholesterol", "mg/dl", 100.0, 320.0},
    {"ast", "u/l", 5.0, 150.0},
    {"hba1c", "%", 4.0, 14.0},
    {"diastolic blood pressure", "mmhg", 50.0, 120.0},
    {"lymphocyte count", "k/ul", 0.5, 5.0},
    {"vitamin d", "ng/ml", 8.0, 80.0},
    {"triglycerides", "mg/dl", 50.0, 400.0},
    {"amylase", "u/l", 20.0, 300.0},
    {"weight", "kg", 40.0, 150.0},
    {"albumin", "g/dl", 2.0, 6.0},
    {"crp", "mg/l", 1.0, 120.0},
    {"absolute neutrophil count", "k/ul", 0.5, 10.0},
    {"bilirubin", "mg/dl", 0.2, 3.0},
    {"lipase", "u/l", 10.0, 250.0},
    {"calcium", "mg/dl", 7.0, 12.0},
    {"creatinine", "mg/dl", 0.5, 3.0},
    {"magnesium", "mg/dl", 1.0, 3.5},
    {"urea", "mg/dl", 5.0, 60.0},
};

const ConceptSpec kAge = {"age", "years", 18.0, 85.0};

ConceptSpec domain_concept(size_t domain, size_t k) {
    const size_t idx = domain * 3 + k;
    if (idx < 30) return kNamedConcepts[idx];
    static const char* kUnits[7] = {"mg/dl", "g/dl", "u/l", "ng/ml", "%", "mmhg", "k/ul"};
    return ConceptSpec{pseudoword(9000 + idx) + " level", kUnits[idx % 7], 10.0, 200.0};
}

const ConceptSpec* find_concept(size_t domain, const std::string& name) {
    static const ConceptSpec age = kAge;
    if (name == "age") return &age;
    static std::map<std::pair<size_t, std::string>, ConceptSpec> cache;
    for (size_t k = 0; k < 3; ++k) {
        ConceptSpec c = domain_concept(domain, k);
        if (c.name == name) {
            auto it = cache.emplace(std::make_pair(domain, name), c).first;
            return &it->second;
        }
    }
    return nullptr;
}

// ---------------------------------------------------------- number rendering

bool is_integer_concept(const std::string& name) { return name == "age"; }

std::string format_value(double v, bool integer) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), integer ? "%.0f" : "%.1f", v);
    return buf;
}

// Snap to the printed granularity by re-parsing the rendered string, so the
// double the oracle compares is bit-identical to what the quantity extractor
// will parse back out of the statement text.
double snap(double v, bool integer) {
    return std::strtod(format_value(v, integer).c_str(), nullptr);
}

// ------------------------------------------------------------------ rendering

const char* kComparators[4] = {"at least", "over", "under", "at most"};

Interval comparator_interval(int variant, double t) {
    Interval r;
    switch (variant) {
        case 0: r.lo = t; r.lo_open = false; break;  // at least
        case 1: r.lo = t; r.lo_open = true; break;   // over
        case 2: r.hi = t; r.hi_open = true; break;   // under
        default: r.hi = t; r.hi_open = false; break; // at most
    }
    return r;
}

const char* kFillers[4] = {
    "willing to provide informed consent",
    "able to attend scheduled study visits",
    "willing to comply with study procedures",
    "able to complete questionnaires without assistance",
};

}  // namespace

std::string OracleRule::render() const {
    std::string out;
    if (kind == StatementKind::exclusion) out = "excluded if ";
    switch (type) {
        case RuleType::has_diag:
            out += (variant == 0 ? "history of " : "diagnosed with ") + code;
            break;
        case RuleType::has_treat:
            out += variant == 0 ? "prior treatment with " + code : "currently taking " + code;
            break;
        case RuleType::demo_equals:
            out += demo_key + " must be " + code;
            break;
        case RuleType::measure_in_range:
            out += concept_name + " " + kComparators[variant] + " " +
                   format_value(threshold, is_integer_concept(concept_name)) + " " + unit;
            break;
        case RuleType::always_true:
            out += kFillers[variant];
            break;
    }
    return out;
}

bool OracleRule::satisfied(const PatientRecord& patient) const {
    switch (type) {
        case RuleType::has_diag:
            for (const auto& v : patient.visits)
                if (v.diagnosis == code) return true;
            return false;
        case RuleType::has_treat:
            for (const auto& v : patient.visits)
                for (const auto& t : v.treatments)
                    if (t == code) return true;
            return false;
        case RuleType::demo_equals: {
            auto it = patient.demographics.find(demo_key);
            return it != patient.demographics.end() && it->second == code;
        }
        case RuleType::measure_in_range: {
            bool seen = false;
            for (const auto& v : patient.visits)
                for (const auto& m : v.measurements)
                    if (m.concept_name == concept_name) {
                        seen = true;
                        if (!range.contains(m.value)) return false;
                    }
            return seen;
        }
        case RuleType::always_true:
            return true;
    }
    return false;
}

Label label_oracle(const std::vector<OracleRule>& rules, const PatientRecord& patient) {
    bool related = false;
    for (const auto& r : rules) {
        if (r.type == RuleType::has_diag || r.type == RuleType::has_treat) {
            if (r.satisfied(patient)) related = true;
        } else if (r.type == RuleType::measure_in_range && r.concept_name != "age") {
            for (const auto& v : patient.visits)
                for (const auto& m : v.measurements)
                    if (m.concept_name == r.concept_name) related = true;
        }
        if (related) break;
    }
    if (!related) return Label::neutral;
    for (const auto& r : rules) {
        const bool ok = r.satisfied(patient);
        if (r.kind == StatementKind::inclusion ? !ok : ok) return Label::contradiction;
    }
    return Label::entailment;
}

// ----------------------------------------------------------------- gen_trial

namespace {

// Minimum usable window width per concept: thresholds and recorded values are
// 1-decimal (age: integer), so anything narrower risks having no interior
// point after snapping.
double window_guard(const ConceptSpec& c) {
    if (is_integer_concept(c.name)) return 2.0;
    return std::max(0.3, 0.04 * (c.hi - c.lo));
}

Interval intersect(const Interval& a, const Interval& b) {
    Interval r;
    if (a.lo > b.lo) { r.lo = a.lo; r.lo_open = a.lo_open; }
    else if (b.lo > a.lo) { r.lo = b.lo; r.lo_open = b.lo_open; }
    else { r.lo = a.lo; r.lo_open = a.lo_open || b.lo_open; }
    if (a.hi < b.hi) { r.hi = a.hi; r.hi_open = a.hi_open; }
    else if (b.hi < a.hi) { r.hi = b.hi; r.hi_open = b.hi_open; }
    else { r.hi = a.hi; r.hi_open = a.hi_open || b.hi_open; }
    return r;
}

bool interval_empty(const Interval& r) {
    if (r.lo > r.hi) return true;
    if (r.lo == r.hi && (r.lo_open || r.hi_open)) return true;
    return false;
}

// All generated numeric rules are one-sided, so the complement of the rule's
// range is again an interval.
Interval complement(const Interval& r) {
    Interval c;
    if (std::isinf(r.lo)) {  // (-inf, hi...) -> [hi..., +inf)
        c.lo = r.hi;
        c.lo_open = !r.hi_open;
    } else {  // (lo..., +inf) -> (-inf, lo...]
        c.hi = r.lo;
        c.hi_open = !r.lo_open;
    }
    return c;
}

Interval plausible(const ConceptSpec& c) {
    Interval r;
    r.lo = c.lo;
    r.hi = c.hi;
    r.lo_open = r.hi_open = false;
    return r;
}

enum Category { kDemo = 0, kCondition, kProcedure, kDrug, kObservation, kCategoryCount };

}  // namespace

GeneratedTrial gen_trial(Rng& rng, const GenConfig& cfg, const std::string& trial_id) {
    if (cfg.domains == 0 || cfg.diag_per_domain == 0 || cfg.treat_per_domain == 0)
        throw DataError("gen_trial: domains and code pools must be nonempty");
    GeneratedTrial out;
    out.domain = rng.index(cfg.domains);
    out.trial.trial_id = trial_id;
    out.trial.condition = pseudoword(8000 + out.domain) + " disorder";

    // 3..10 statements, weighted toward short criteria lists. A single
    // violated rule has to show through the row-sum aggregate, so long lists
    // dilute exactly the examples that carry the most training signal; real
    // trial registries skew short too.
    const size_t n = 3 + std::min(rng.index(8), rng.index(8));
    std::set<std::string> used_diag, used_treat, used_filler;
    std::set<std::string> used_concepts;
    bool used_gender = false;

    auto push_rule = [&](OracleRule r) {
        ECStatement st;
        st.id = "s" + std::to_string(out.trial.statements.size() + 1);
        st.kind = r.kind;
        st.text = r.render();
        out.trial.statements.push_back(std::move(st));
        out.rules.push_back(std::move(r));
    };

    // Lead slot: an in-domain condition requirement anchors every trial to
    // its domain.
    {
        OracleRule r;
        r.type = RuleType::has_diag;
        r.kind = StatementKind::inclusion;
        r.code = diag_code(cfg, out.domain, rng.index(cfg.diag_per_domain));
        r.variant = static_cast<int>(rng.index(2));
        used_diag.insert(r.code);
        push_rule(std::move(r));
    }

    const double mix[kCategoryCount] = {cfg.mix_demographic, cfg.mix_condition,
                                        cfg.mix_procedure, cfg.mix_drug, cfg.mix_observation};

    while (out.trial.statements.size() < n) {
        // Numeric slot? Limited by the unconstrained concepts left (3 domain
        // concepts plus age).
        std::vector<ConceptSpec> numeric_pool;
        for (size_t k = 0; k < 3; ++k) {
            ConceptSpec c = domain_concept(out.domain, k);
            if (!used_concepts.count(c.name)) numeric_pool.push_back(std::move(c));
        }
        if (!used_concepts.count("age")) numeric_pool.push_back(kAge);

        if (!numeric_pool.empty() && rng.bernoulli(cfg.numeric_fraction)) {
            const ConceptSpec c = numeric_pool[rng.index(numeric_pool.size())];
            const bool integer = is_integer_concept(c.name);
            const double w = c.hi - c.lo;
            OracleRule r;
            r.type = RuleType::measure_in_range;
            r.kind = rng.bernoulli(0.3) ? StatementKind::exclusion : StatementKind::inclusion;
            r.variant = static_cast<int>(rng.index(4));
            r.concept_name = c.name;
            r.unit = c.unit;
            // Central cut keeps both sides of the bound wide enough to sample.
            r.threshold = snap(rng.uniform(c.lo + 0.15 * w, c.hi - 0.15 * w), integer);
            r.range = comparator_interval(r.variant, r.threshold);
            used_concepts.insert(c.name);
            push_rule(std::move(r));
            continue;
        }

        double total = 0.0;
        for (double m : mix) total += m;
        Category cat = kObservation;
        if (total > 0.0) {
            double roll = rng.uniform() * total;
            for (int i = 0; i < kCategoryCount; ++i) {
                roll -= mix[i];
                if (roll < 0.0) { cat = static_cast<Category>(i); break; }
            }
        }

        if (cat == kDemo && !used_gender) {
            OracleRule r;
            r.type = RuleType::demo_equals;
            r.kind = StatementKind::inclusion;
            r.demo_key = "gender";
            r.code = rng.bernoulli(0.5) ? "female" : "male";
            used_gender = true;
            push_rule(std::move(r));
            continue;
        }
        if (cat == kCondition && used_diag.size() < cfg.diag_per_domain) {
            OracleRule r;
            r.type = RuleType::has_diag;
            r.kind = rng.bernoulli(0.3) ? StatementKind::exclusion : StatementKind::inclusion;
            r.variant = static_cast<int>(rng.index(2));
            do {
                r.code = diag_code(cfg, out.domain, rng.index(cfg.diag_per_domain));
            } while (used_diag.count(r.code));
            used_diag.insert(r.code);
            push_rule(std::move(r));
            continue;
        }
        if ((cat == kProcedure || cat == kDrug) && used_treat.size() < cfg.treat_per_domain) {
            OracleRule r;
            r.type = RuleType::has_treat;
            r.kind = rng.bernoulli(0.3) ? StatementKind::exclusion : StatementKind::inclusion;
            r.variant = cat == kProcedure ? 0 : 1;
            do {
                r.code = treat_code(cfg, out.domain, rng.index(cfg.treat_per_domain));
            } while (used_treat.count(r.code));
            used_treat.insert(r.code);
            push_rule(std::move(r));
            continue;
        }
        // Observation (or an exhausted category falling through): an
        // always-true filler, repeated texts allowed once the list runs out.
        OracleRule r;
        r.type = RuleType::always_true;
        r.kind = StatementKind::inclusion;
        if (used_filler.size() < 4) {
            do {
                r.variant = static_cast<int>(rng.index(4));
            } while (used_filler.count(kFillers[r.variant]));
            used_filler.insert(kFillers[r.variant]);
        } else {
            r.variant = static_cast<int>(rng.index(4));
        }
        push_rule(std::move(r));
    }
    return out;
}

// --------------------------------------------------------------- gen_patient

namespace {

// Everything a patient must satisfy, accumulated over one or more trials'
// rules. Numeric constraints are kept as allowed windows (plausible range
// intersected with each rule or its complement).
struct ConstraintSet {
    size_t domain = 0;
    std::map<std::string, std::string> demo_required;
    std::set<std::string> required_diags, forbidden_diags;
    std::set<std::string> required_treats, forbidden_treats;
    std::map<std::string, Interval> windows;  // concept -> allowed values

    explicit ConstraintSet(size_t d) : domain(d) {
        for (size_t k = 0; k < 3; ++k) {
            const ConceptSpec c = domain_concept(d, k);
            windows[c.name] = plausible(c);
        }
        windows["age"] = plausible(kAge);
    }
};

bool window_ok(const ConstraintSet& cs, const std::string& name) {
    const Interval& w = cs.windows.at(name);
    if (interval_empty(w)) return false;
    const ConceptSpec* spec = find_concept(cs.domain, name);
    return spec != nullptr && w.hi - w.lo >= window_guard(*spec);
}

// Apply one rule; `negate` flips it (used to manufacture contradictions).
// Returns false when the constraint set becomes unsatisfiable.
bool apply_rule(ConstraintSet& cs, const OracleRule& r, bool negate) {
    const bool want = (r.kind == StatementKind::inclusion) != negate;
    switch (r.type) {
        case RuleType::has_diag:
            if (want) {
                if (cs.forbidden_diags.count(r.code)) return false;
                cs.required_diags.insert(r.code);
                return cs.required_diags.size() <= 6;
            }
            if (cs.required_diags.count(r.code)) return false;
            cs.forbidden_diags.insert(r.code);
            return true;
        case RuleType::has_treat:
            if (want) {
                if (cs.forbidden_treats.count(r.code)) return false;
                cs.required_treats.insert(r.code);
                return true;
            }
            if (cs.required_treats.count(r.code)) return false;
            cs.forbidden_treats.insert(r.code);
            return true;
        case RuleType::demo_equals: {
            std::string v = r.code;
            if (negate) v = v == "male" ? "female" : "male";
            auto it = cs.demo_required.find(r.demo_key);
            if (it != cs.demo_required.end()) return it->second == v;
            cs.demo_required[r.demo_key] = v;
            return true;
        }
        case RuleType::measure_in_range: {
            auto it = cs.windows.find(r.concept_name);
            if (it == cs.windows.end()) return false;  // foreign concept
            it->second = intersect(it->second, want ? r.range : complement(r.range));
            return window_ok(cs, r.concept_name);
        }
        case RuleType::always_true:
            return !negate;  // fillers cannot be broken
    }
    return false;
}

bool apply_trial(ConstraintSet& cs, const GeneratedTrial& gt) {
    if (gt.domain != cs.domain) return false;
    ConstraintSet backup = cs;
    for (const auto& r : gt.rules)
        if (!apply_rule(cs, r, false)) {
            cs = std::move(backup);
            return false;
        }
    return true;
}

// A buildable patient needs at least one permissible diagnosis code (visits
// always carry a diagnosis; treatments may be empty).
bool diag_feasible(const ConstraintSet& cs, const GenConfig& cfg) {
    if (!cs.required_diags.empty()) return true;
    for (size_t i = 0; i < cfg.diag_per_domain; ++i)
        if (!cs.forbidden_diags.count(diag_code(cfg, cs.domain, i))) return true;
    return false;
}

double sample_in_window(Rng& rng, const Interval& w, bool integer) {
    for (int attempt = 0; attempt < 32; ++attempt) {
        const double v = snap(rng.uniform(w.lo, w.hi), integer);
        if (w.contains(v)) return v;
    }
    const double mid = snap(0.5 * (w.lo + w.hi), integer);
    if (w.contains(mid)) return mid;
    throw DataError("sample_in_window: no representable point in window");
}

const char* kCountries[5] = {"us", "uk", "ca", "de", "fr"};
const char* kGeo[3] = {"urban", "rural", "suburban"};
const char* kEthnicity[3] = {"hispanic", "nonhispanic", "unknown"};
const char* kBlood[8] = {"a+", "a-", "b+", "b-", "ab+", "ab-", "o+", "o-"};

PatientRecord build_patient(Rng& rng, const GenConfig& cfg, const ConstraintSet& cs,
                            const std::string& patient_id) {
    PatientRecord p;
    p.patient_id = patient_id;

    const double age = sample_in_window(rng, cs.windows.at("age"), true);
    auto gi = cs.demo_required.find("gender");
    p.demographics["gender"] = gi != cs.demo_required.end()
                                   ? gi->second
                                   : (rng.bernoulli(0.5) ? "female" : "male");
    p.demographics["birth_year"] = std::to_string(2020 - static_cast<int>(age));
    p.demographics["country"] = kCountries[rng.index(5)];
    p.demographics["geo"] = kGeo[rng.index(3)];
    p.demographics["ethnicity"] = kEthnicity[rng.index(3)];
    p.demographics["blood_type"] = kBlood[rng.index(8)];

    const size_t n_visits =
        std::min<size_t>(8, std::max<size_t>(2, cs.required_diags.size()) + rng.index(3));

    // Required diagnosis codes land on distinct shuffled visits; the rest get
    // random in-domain codes outside the forbidden set.
    std::vector<std::string> allowed_diags, allowed_treats;
    for (size_t i = 0; i < cfg.diag_per_domain; ++i) {
        std::string c = diag_code(cfg, cs.domain, i);
        if (!cs.forbidden_diags.count(c)) allowed_diags.push_back(std::move(c));
    }
    for (size_t i = 0; i < cfg.treat_per_domain; ++i) {
        std::string c = treat_code(cfg, cs.domain, i);
        if (!cs.forbidden_treats.count(c)) allowed_treats.push_back(std::move(c));
    }
    if (allowed_diags.empty())
        throw DataError("build_patient: every diagnosis code in the domain is forbidden");

    std::vector<std::string> diag_slots(n_visits);
    std::vector<size_t> order(n_visits);
    for (size_t i = 0; i < n_visits; ++i) order[i] = i;
    rng.shuffle(order);
    size_t slot = 0;
    for (const auto& code : cs.required_diags) diag_slots[order[slot++]] = code;
    for (size_t i = 0; i < n_visits; ++i)
        if (diag_slots[i].empty()) diag_slots[i] = allowed_diags[rng.index(allowed_diags.size())];

    std::vector<std::set<std::string>> treat_slots(n_visits);
    for (const auto& code : cs.required_treats) treat_slots[rng.index(n_visits)].insert(code);
    if (!allowed_treats.empty())
        for (size_t i = 0; i < n_visits; ++i) {
            const size_t extra = rng.index(2);
            for (size_t k = 0; k < extra; ++k)
                treat_slots[i].insert(allowed_treats[rng.index(allowed_treats.size())]);
        }

    // Exactly one measurement per concept, placed on a random visit. Having
    // every domain concept present keeps "missing measurement" out of the
    // label semantics entirely.
    std::vector<std::vector<Measurement>> meas_slots(n_visits);
    for (const auto& [name, window] : cs.windows) {
        const ConceptSpec* spec = find_concept(cs.domain, name);
        Measurement m;
        m.concept_name = name;
        m.value = sample_in_window(rng, window, is_integer_concept(name));
        m.unit = spec->unit;
        meas_slots[rng.index(n_visits)].push_back(std::move(m));
    }

    for (size_t i = 0; i < n_visits; ++i) {
        Visit v;
        v.visit_id = "v" + std::to_string(i + 1);
        char date[16];
        std::snprintf(date, sizeof(date), "2019-%02zu-%02zu", i + 1, 1 + rng.index(28));
        v.date = date;
        v.diagnosis = diag_slots[i];
        v.treatments.assign(treat_slots[i].begin(), treat_slots[i].end());
        v.measurements = std::move(meas_slots[i]);
        p.visits.push_back(std::move(v));
    }
    return p;
}

}  // namespace

PatientRecord gen_patient(Rng& rng, const GenConfig& cfg, const std::string& patient_id) {
    if (cfg.domains == 0) throw DataError("gen_patient: domains must be nonzero");
    ConstraintSet cs(rng.index(cfg.domains));
    PatientRecord p = build_patient(rng, cfg, cs, patient_id);
    // The dataset builder caps visits at 8; the standalone generator covers
    // the full 1..20 documented range by appending extra unconstrained visits.
    const size_t total = 1 + rng.index(20);
    while (p.visits.size() > total) p.visits.pop_back();
    for (size_t i = p.visits.size(); i < total; ++i) {
        Visit v;
        v.visit_id = "v" + std::to_string(i + 1);
        char date[32];
        std::snprintf(date, sizeof(date), "20%02zu-%02zu-%02zu", 19 + (i + 1) / 12,
                      1 + (i + 1) % 12, 1 + rng.index(28));
        v.date = date;
        v.diagnosis = diag_code(cfg, cs.domain, rng.index(cfg.diag_per_domain));
        const size_t extra = rng.index(3);
        std::set<std::string> treats;
        for (size_t k = 0; k < extra; ++k)
            treats.insert(treat_code(cfg, cs.domain, rng.index(cfg.treat_per_domain)));
        v.treatments.assign(treats.begin(), treats.end());
        p.visits.push_back(std::move(v));
    }
    return p;
}

// ---------------------------------------------------------------- gen_dataset

namespace {

std::string pad_id(const char* prefix, size_t i, int width) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, i);
    return buf;
}

}  // namespace

GenOutput gen_dataset(const GenConfig& cfg) {
    if (cfg.trials < 2 || cfg.patients < 5)
        throw DataError("gen_dataset: need at least 2 trials and 5 patients");
    Rng rng(cfg.seed);
    GenOutput out;

    const int tw = cfg.trials >= 1000 ? 4 : 3;
    const int pw = cfg.patients >= 10000 ? 5 : 4;
    std::vector<std::vector<size_t>> by_domain(cfg.domains);
    for (size_t i = 0; i < cfg.trials; ++i) {
        GeneratedTrial gt = gen_trial(rng, cfg, pad_id("t", i + 1, tw));
        by_domain[gt.domain].push_back(i);
        out.data.trials.push_back(gt.trial);
        out.trials.push_back(std::move(gt));
    }
    size_t realized_domains = 0;
    for (const auto& d : by_domain)
        if (!d.empty()) ++realized_domains;
    if (realized_domains < 2)
        throw DataError("gen_dataset: trials span fewer than 2 domains; increase trials");

    // Candidate pairs bucketed by oracle label; examples are drawn from these
    // pools afterwards.
    std::vector<std::pair<size_t, size_t>> pool[3];  // (trial idx, patient idx)

    for (size_t pi = 0; pi < cfg.patients; ++pi) {
        const std::string pid = pad_id("p", pi + 1, pw);
        const size_t home = rng.index(cfg.trials);
        const size_t domain = out.trials[home].domain;
        std::set<size_t> eligible;
        std::optional<ConstraintSet> cs;

        // 78% of patients are built to satisfy their home trial (plus merged
        // compatible siblings, the entailment supply); the rest break exactly
        // one home rule.
        if (!rng.bernoulli(0.78)) {
            std::vector<size_t> breakable;
            for (size_t ri = 0; ri < out.trials[home].rules.size(); ++ri)
                if (out.trials[home].rules[ri].type != RuleType::always_true)
                    breakable.push_back(ri);
            rng.shuffle(breakable);
            for (size_t ri : breakable) {
                ConstraintSet trial_cs(domain);
                bool ok = true;
                for (size_t rj = 0; rj < out.trials[home].rules.size() && ok; ++rj)
                    ok = apply_rule(trial_cs, out.trials[home].rules[rj], rj == ri);
                if (ok && diag_feasible(trial_cs, cfg)) {
                    cs = std::move(trial_cs);
                    break;
                }
            }
        }
        if (!cs) {
            ConstraintSet merged(domain);
            if (!apply_trial(merged, out.trials[home]))
                throw DataError("gen_dataset: trial " + out.trials[home].trial.trial_id +
                                " is self-contradictory");
            eligible.insert(home);
            const auto& dom_trials = by_domain[domain];
            for (int attempt = 0; attempt < 14 && eligible.size() < 6; ++attempt) {
                const size_t cand = dom_trials[rng.index(dom_trials.size())];
                if (eligible.count(cand)) continue;
                if (apply_trial(merged, out.trials[cand])) eligible.insert(cand);
            }
            cs = std::move(merged);
        }
        out.data.patients.push_back(build_patient(rng, cfg, *cs, pid));
        const PatientRecord& patient = out.data.patients.back();

        std::set<size_t> candidates = eligible;
        candidates.insert(home);
        const auto& dom_trials = by_domain[domain];
        for (int k = 0; k < 7; ++k) candidates.insert(dom_trials[rng.index(dom_trials.size())]);
        for (int k = 0; k < 6; ++k) {
            const size_t t = rng.index(cfg.trials);
            if (out.trials[t].domain != domain) candidates.insert(t);
        }
        for (size_t t : candidates) {
            const Label l = label_oracle(out.trials[t].rules, patient);
            pool[static_cast<size_t>(l)].emplace_back(t, pi);
        }
    }

    // Balanced-within-tolerance draw at a 13:16:21 entailment/contradiction/
    // neutral ratio (26/32/42%). Every class stays inside the [23%, 43%]
    // window, and keeping one class a clear plurality matters for training
    // dynamics: with contradiction and neutral at exactly equal shares, an
    // untrained classifier rides the knife edge between predicting all-C and
    // all-N, and each flip shows up as a spurious dev-accuracy drop that
    // triggers the divide-by-5 learning-rate rule long before any signal
    // emerges. A stable plurality keeps early dev accuracy flat instead.
    for (auto& p : pool) rng.shuffle(p);
    for (int l = 0; l < 3; ++l)
        if (pool[l].empty())
            throw DataError(std::string("gen_dataset: no candidate pairs labeled ") +
                            label_name(static_cast<Label>(l)));
    const size_t e_avail = pool[0].size(), c_avail = pool[1].size(), n_avail = pool[2].size();
    size_t e_take = std::min(e_avail, cfg.target_examples * 13 / 50);
    size_t total = std::min(cfg.target_examples, e_take * 50 / 13);
    size_t c_take = std::min(c_avail, e_take * 16 / 13);
    size_t n_take = std::min(n_avail, total - e_take - c_take);
    c_take = std::min(c_avail, total - e_take - n_take);

    const size_t takes[3] = {e_take, c_take, n_take};
    for (int l = 0; l < 3; ++l)
        for (size_t k = 0; k < takes[l]; ++k) {
            const auto& [ti, pi] = pool[l][k];
            LabeledExample e;
            e.trial_id = out.data.trials[ti].trial_id;
            for (const auto& st : out.data.trials[ti].statements) e.statement_ids.push_back(st.id);
            e.patient_id = out.data.patients[pi].patient_id;
            e.label = static_cast<Label>(l);
            out.data.examples.push_back(std::move(e));
        }
    std::sort(out.data.examples.begin(), out.data.examples.end(),
              [](const LabeledExample& a, const LabeledExample& b) {
                  return a.trial_id != b.trial_id ? a.trial_id < b.trial_id
                                                  : a.patient_id < b.patient_id;
              });
    return out;
}

// -------------------------------------------------------------------- config

GenConfig load_gen_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path);
    GenConfig cfg;
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto notspace = [](unsigned char c) { return !std::isspace(c); };
        line.erase(line.begin(), std::find_if(line.begin(), line.end(), notspace));
        line.erase(std::find_if(line.rbegin(), line.rend(), notspace).base(), line.end());
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError(path + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        try {
            if (key == "trials") cfg.trials = std::stoull(val);
            else if (key == "patients") cfg.patients = std::stoull(val);
            else if (key == "target_examples") cfg.target_examples = std::stoull(val);
            else if (key == "domains") cfg.domains = std::stoull(val);
            else if (key == "diag_per_domain") cfg.diag_per_domain = std::stoull(val);
            else if (key == "treat_per_domain") cfg.treat_per_domain = std::stoull(val);
            else if (key == "numeric_fraction") cfg.numeric_fraction = std::stod(val);
            else if (key == "mix_demographic") cfg.mix_demographic = std::stod(val);
            else if (key == "mix_condition") cfg.mix_condition = std::stod(val);
            else if (key == "mix_procedure") cfg.mix_procedure = std::stod(val);
            else if (key == "mix_drug") cfg.mix_drug = std::stod(val);
            else if (key == "mix_observation") cfg.mix_observation = std::stod(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else throw DataError(path + ":" + std::to_string(lineno) + ": unknown key " + key);
        } catch (const std::invalid_argument&) {
            throw DataError(path + ":" + std::to_string(lineno) + ": bad value for " + key);
        }
    }
    if (cfg.numeric_fraction < 0.0 || cfg.numeric_fraction > 1.0)
        throw DataError(path + ": numeric_fraction must be in [0, 1]");
    return cfg;
}

void save_gen_config(const std::string& path, const GenConfig& cfg) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot open " + path + " for writing");
    char num[32];
    const auto fmt = [&](double v) {
        std::snprintf(num, sizeof(num), "%.17g", v);
        return std::string(num);
    };
    os << "trials=" << cfg.trials << "\n"
       << "patients=" << cfg.patients << "\n"
       << "target_examples=" << cfg.target_examples << "\n"
       << "domains=" << cfg.domains << "\n"
       << "diag_per_domain=" << cfg.diag_per_domain << "\n"
       << "treat_per_domain=" << cfg.treat_per_domain << "\n"
       << "numeric_fraction=" << fmt(cfg.numeric_fraction) << "\n"
       << "mix_demographic=" << fmt(cfg.mix_demographic) << "\n"
       << "mix_condition=" << fmt(cfg.mix_condition) << "\n"
       << "mix_procedure=" << fmt(cfg.mix_procedure) << "\n"
       << "mix_drug=" << fmt(cfg.mix_drug) << "\n"
       << "mix_observation=" << fmt(cfg.mix_observation) << "\n"
       << "seed=" << cfg.seed << "\n";
    if (!os) throw DataError("write failed: " + path);
}

}  // namespace enroll
