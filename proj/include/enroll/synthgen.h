#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "enroll/data.h"
#include "enroll/nir.h"
#include "enroll/rng.h"

namespace enroll {

// Knobs for the synthetic cohort generator. The mix weights steer the
// non-numeric criterion categories; the numeric fraction is the probability
// that a non-lead slot becomes a measurement criterion (clamped by how many
// distinct concepts a trial's domain offers). Everything is deterministic in
// the seed.
struct GenConfig {
    size_t trials = 100;
    size_t patients = 2000;
    size_t target_examples = 20000;
    size_t domains = 10;
    size_t diag_per_domain = 5;
    size_t treat_per_domain = 6;
    // Numeric thresholds are invisible to the embedding model by design (only
    // the inference-time override reads them), so every numeric statement is
    // label noise during training. A modest share keeps the override
    // exercised on the default dataset while leaving the learnable signal
    // dominant; the override study raises it explicitly when it wants a
    // numeric-heavy set.
    double numeric_fraction = 0.15;
    double mix_demographic = 1.0;
    double mix_condition = 1.0;
    double mix_procedure = 1.0;
    double mix_drug = 1.0;
    double mix_observation = 1.0;
    uint64_t seed = 42;
};

// Flat key=value file, one pair per line, '#' comments allowed. Unknown keys
// are an error so typos do not silently fall back to defaults.
GenConfig load_gen_config(const std::string& path);
void save_gen_config(const std::string& path, const GenConfig& cfg);

// Ground-truth rule behind one generated statement. render() reproduces the
// statement text exactly (same template, same number formatting), which is
// what keeps the oracle and the surface text in lockstep.
enum class RuleType { has_diag, has_treat, demo_equals, measure_in_range, always_true };

struct OracleRule {
    RuleType type = RuleType::always_true;
    StatementKind kind = StatementKind::inclusion;
    int variant = 0;           // surface template index within the type
    std::string code;          // diag/treat code or demographic value
    std::string demo_key;      // demo_equals only
    std::string concept_name;  // measure_in_range only ("age" included)
    std::string unit;
    Interval range;            // the interval as written, endpoints snapped
    double threshold = 0.0;    // the rendered number

    std::string render() const;
    // kind is ignored here: this asks "does the condition hold", and the
    // oracle applies inclusion/exclusion polarity on top.
    bool satisfied(const PatientRecord& patient) const;
};

struct GeneratedTrial {
    TrialCriteria trial;
    std::vector<OracleRule> rules;  // rules[i] backs trial.statements[i]
    size_t domain = 0;
};

// One trial: a lead condition criterion plus 2..9 mixed slots, deduplicated
// so no code or concept is constrained twice.
GeneratedTrial gen_trial(Rng& rng, const GenConfig& cfg, const std::string& trial_id);

// One unconstrained patient: 1..20 visits, codes from one domain's pools,
// every domain concept (plus age) measured exactly once.
PatientRecord gen_patient(Rng& rng, const GenConfig& cfg, const std::string& patient_id);

// Eligibility under a rule set: neutral when the record shares no diagnosis,
// treatment, or measured concept with the rules (age does not count, every
// patient has one); otherwise entailment iff all inclusions hold and no
// exclusion does.
Label label_oracle(const std::vector<OracleRule>& rules, const PatientRecord& patient);

struct GenOutput {
    Dataset data;
    std::vector<GeneratedTrial> trials;  // aligned with data.trials
};

// Full corpus: trials, patients engineered so each label has real support,
// and a balanced example selection close to target_examples.
GenOutput gen_dataset(const GenConfig& cfg);

}  // namespace enroll
