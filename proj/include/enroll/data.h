#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "enroll/tensor.h"

namespace enroll {

enum class Label { entailment = 0, contradiction = 1, neutral = 2 };

const char* label_name(Label l);
Label parse_label(const std::string& s);

enum class StatementKind { inclusion, exclusion };

const char* kind_name(StatementKind k);
StatementKind parse_kind(const std::string& s);

struct ECStatement {
    std::string id;
    StatementKind kind = StatementKind::inclusion;
    std::string text;
};

struct TrialCriteria {
    std::string trial_id;
    std::string condition;
    std::vector<ECStatement> statements;

    const ECStatement* find_statement(const std::string& id) const;
};

// "concept" is reserved in C++20, hence concept_name; the JSON key is still
// "concept".
struct Measurement {
    std::string concept_name;
    double value = 0.0;
    std::string unit;
    bool unit_known = true;  // false when the unit is absent from the table
};

struct Visit {
    std::string visit_id;
    std::string date;  // ISO-8601
    std::string diagnosis;
    std::vector<std::string> treatments;  // sorted set of codes
    std::vector<Measurement> measurements;
};

inline constexpr std::array<const char*, 6> kDemographicKeys = {
    "birth_year", "gender", "country", "geo", "ethnicity", "blood_type"};

struct PatientRecord {
    std::string patient_id;
    std::map<std::string, std::string> demographics;  // exactly kDemographicKeys
    std::vector<Visit> visits;                        // sorted by (date, visit_id)
};

struct LabeledExample {
    std::string trial_id;
    std::vector<std::string> statement_ids;
    std::string patient_id;
    Label label = Label::neutral;
};

// Bijection code <-> dense index, indices contiguous from 0. Evaluation-time
// unknowns map to a reserved UNK entry added at build time.
class Vocabulary {
  public:
    static constexpr const char* kUnk = "<unk>";

    size_t add(const std::string& code);  // idempotent, returns the index
    bool contains(const std::string& code) const { return index_.count(code) > 0; }
    size_t index_of(const std::string& code) const;  // unknown -> DataError
    size_t index_or_unk(const std::string& code) const;
    const std::string& code_of(size_t idx) const;
    size_t size() const { return codes_.size(); }

  private:
    std::vector<std::string> codes_;
    std::unordered_map<std::string, size_t> index_;
};

Tensor one_hot(const std::string& code, const Vocabulary& vocab);

// JSON Lines IO. Loaders validate every record and report errors as
// "<path>:<line>: <reason>"; savers emit one compact object per line with a
// fixed key order so that save -> load -> save is byte-identical.
std::vector<TrialCriteria> load_trials(const std::string& path);
void save_trials(const std::string& path, const std::vector<TrialCriteria>& trials);

// known_units, when given, is the set of unit surface forms the unit table
// resolves; measurements outside it load with unit_known = false.
std::vector<PatientRecord> load_patients(const std::string& path,
                                         const std::unordered_set<std::string>* known_units =
                                             nullptr);
void save_patients(const std::string& path, const std::vector<PatientRecord>& patients);

std::vector<LabeledExample> load_labels(const std::string& path);
void save_labels(const std::string& path, const std::vector<LabeledExample>& examples);

struct Dataset {
    std::vector<TrialCriteria> trials;
    std::vector<PatientRecord> patients;
    std::vector<LabeledExample> examples;

    const TrialCriteria* find_trial(const std::string& id) const;
    const PatientRecord* find_patient(const std::string& id) const;
};

// Loads trials.jsonl / patients.jsonl / labels.jsonl from dir and checks that
// every example's trial, statements, and patient resolve.
Dataset load_dataset(const std::string& dir,
                     const std::unordered_set<std::string>* known_units = nullptr);
void validate_examples(const Dataset& ds);

struct SplitResult {
    std::vector<LabeledExample> train, dev, test;
};

// Partition BY PATIENT, 60/20/20 of distinct patient ids (rounded), shuffled
// deterministically by seed. Requires at least 5 distinct patients.
SplitResult split_dataset(const std::vector<LabeledExample>& examples, uint64_t seed);

}  // namespace enroll
