#include "enroll/data.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "enroll/errors.h"
#include "enroll/jsonl.h"
#include "enroll/rng.h"

namespace enroll {

using ordered_json = nlohmann::ordered_json;

const char* label_name(Label l) {
    switch (l) {
        case Label::entailment: return "entailment";
        case Label::contradiction: return "contradiction";
        case Label::neutral: return "neutral";
    }
    return "?";
}

Label parse_label(const std::string& s) {
    if (s == "entailment") return Label::entailment;
    if (s == "contradiction") return Label::contradiction;
    if (s == "neutral") return Label::neutral;
    throw DataError("unknown label: " + s);
}

const char* kind_name(StatementKind k) {
    return k == StatementKind::inclusion ? "inclusion" : "exclusion";
}

StatementKind parse_kind(const std::string& s) {
    if (s == "inclusion") return StatementKind::inclusion;
    if (s == "exclusion") return StatementKind::exclusion;
    throw DataError("unknown statement kind: " + s);
}

const ECStatement* TrialCriteria::find_statement(const std::string& id) const {
    for (const auto& st : statements)
        if (st.id == id) return &st;
    return nullptr;
}

size_t Vocabulary::add(const std::string& code) {
    auto it = index_.find(code);
    if (it != index_.end()) return it->second;
    const size_t idx = codes_.size();
    codes_.push_back(code);
    index_.emplace(code, idx);
    return idx;
}

size_t Vocabulary::index_of(const std::string& code) const {
    auto it = index_.find(code);
    if (it == index_.end()) throw DataError("unknown code: " + code);
    return it->second;
}

size_t Vocabulary::index_or_unk(const std::string& code) const {
    auto it = index_.find(code);
    if (it != index_.end()) return it->second;
    return index_of(kUnk);
}

const std::string& Vocabulary::code_of(size_t idx) const {
    if (idx >= codes_.size())
        throw DataError("vocabulary index " + std::to_string(idx) + " out of range " +
                        std::to_string(codes_.size()));
    return codes_[idx];
}

Tensor one_hot(const std::string& code, const Vocabulary& vocab) {
    Tensor t(Shape{vocab.size()});
    t.values[vocab.index_of(code)] = 1.0;
    return t;
}


std::vector<TrialCriteria> load_trials(const std::string& path) {
    std::vector<TrialCriteria> out;
    std::unordered_set<std::string> seen;
    for_each_jsonl(path, [&](const ordered_json& j) {
        TrialCriteria t;
        t.trial_id = get_string(j, "trial_id");
        if (!seen.insert(t.trial_id).second)
            throw DataError("duplicate trial_id: " + t.trial_id);
        t.condition = get_string(j, "condition");
        if (!j.contains("criteria") || !j.at("criteria").is_array())
            throw DataError("trial " + t.trial_id + ": \"criteria\" must be an array");
        std::unordered_set<std::string> stmt_ids;
        for (const auto& c : j.at("criteria")) {
            ECStatement st;
            st.id = get_string(c, "id");
            st.kind = parse_kind(get_string(c, "kind"));
            st.text = get_string(c, "text");
            if (st.text.empty())
                throw DataError("trial " + t.trial_id + ": statement " + st.id + " has empty text");
            if (!stmt_ids.insert(st.id).second)
                throw DataError("trial " + t.trial_id + ": duplicate statement id " + st.id);
            t.statements.push_back(std::move(st));
        }
        if (t.statements.empty())
            throw DataError("trial " + t.trial_id + " has no statements");
        out.push_back(std::move(t));
    });
    return out;
}

void save_trials(const std::string& path, const std::vector<TrialCriteria>& trials) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot open " + path + " for writing");
    for (const auto& t : trials) {
        ordered_json j;
        j["trial_id"] = t.trial_id;
        j["condition"] = t.condition;
        ordered_json crit = ordered_json::array();
        for (const auto& st : t.statements) {
            ordered_json c;
            c["id"] = st.id;
            c["kind"] = kind_name(st.kind);
            c["text"] = st.text;
            crit.push_back(std::move(c));
        }
        j["criteria"] = std::move(crit);
        os << j.dump() << "\n";
    }
    if (!os) throw DataError("write failed: " + path);
}

std::vector<PatientRecord> load_patients(const std::string& path,
                                         const std::unordered_set<std::string>* known_units) {
    std::vector<PatientRecord> out;
    std::unordered_set<std::string> seen;
    for_each_jsonl(path, [&](const ordered_json& j) {
        PatientRecord p;
        p.patient_id = get_string(j, "patient_id");
        if (!seen.insert(p.patient_id).second)
            throw DataError("duplicate patient_id: " + p.patient_id);
        if (!j.contains("demographics") || !j.at("demographics").is_object())
            throw DataError("patient " + p.patient_id + ": \"demographics\" must be an object");
        const auto& demo = j.at("demographics");
        for (const char* key : kDemographicKeys) {
            if (!demo.contains(key))
                throw DataError("patient " + p.patient_id + ": missing demographic \"" + key +
                                "\"");
            p.demographics[key] = demo.at(key).get<std::string>();
        }
        if (demo.size() != kDemographicKeys.size())
            throw DataError("patient " + p.patient_id + ": unexpected demographic key");
        if (!j.contains("visits") || !j.at("visits").is_array())
            throw DataError("patient " + p.patient_id + ": \"visits\" must be an array");
        for (const auto& vj : j.at("visits")) {
            Visit v;
            v.visit_id = get_string(vj, "visit_id");
            v.date = get_string(vj, "date");
            v.diagnosis = get_string(vj, "diagnosis");
            if (!vj.contains("treatments") || !vj.at("treatments").is_array())
                throw DataError("visit " + v.visit_id + ": \"treatments\" must be an array");
            for (const auto& tj : vj.at("treatments")) v.treatments.push_back(tj.get<std::string>());
            std::sort(v.treatments.begin(), v.treatments.end());
            v.treatments.erase(std::unique(v.treatments.begin(), v.treatments.end()),
                               v.treatments.end());
            if (!vj.contains("measurements") || !vj.at("measurements").is_array())
                throw DataError("visit " + v.visit_id + ": \"measurements\" must be an array");
            for (const auto& mj : vj.at("measurements")) {
                Measurement m;
                m.concept_name = get_string(mj, "concept");
                if (!mj.contains("value") || !mj.at("value").is_number())
                    throw DataError("visit " + v.visit_id + ": measurement value must be numeric");
                m.value = mj.at("value").get<double>();
                m.unit = get_string(mj, "unit");
                m.unit_known = known_units == nullptr || known_units->count(m.unit) > 0;
                v.measurements.push_back(std::move(m));
            }
            p.visits.push_back(std::move(v));
        }
        if (p.visits.empty())
            throw DataError("patient " + p.patient_id + " has no visits");
        std::sort(p.visits.begin(), p.visits.end(), [](const Visit& a, const Visit& b) {
            return a.date != b.date ? a.date < b.date : a.visit_id < b.visit_id;
        });
        out.push_back(std::move(p));
    });
    return out;
}

void save_patients(const std::string& path, const std::vector<PatientRecord>& patients) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot open " + path + " for writing");
    for (const auto& p : patients) {
        ordered_json j;
        j["patient_id"] = p.patient_id;
        ordered_json demo;
        for (const char* key : kDemographicKeys) {
            auto it = p.demographics.find(key);
            demo[key] = it == p.demographics.end() ? "" : it->second;
        }
        j["demographics"] = std::move(demo);
        ordered_json visits = ordered_json::array();
        for (const auto& v : p.visits) {
            ordered_json vj;
            vj["visit_id"] = v.visit_id;
            vj["date"] = v.date;
            vj["diagnosis"] = v.diagnosis;
            vj["treatments"] = v.treatments;
            ordered_json ms = ordered_json::array();
            for (const auto& m : v.measurements) {
                ordered_json mj;
                mj["concept"] = m.concept_name;
                mj["value"] = m.value;
                mj["unit"] = m.unit;
                ms.push_back(std::move(mj));
            }
            vj["measurements"] = std::move(ms);
            visits.push_back(std::move(vj));
        }
        j["visits"] = std::move(visits);
        os << j.dump() << "\n";
    }
    if (!os) throw DataError("write failed: " + path);
}

std::vector<LabeledExample> load_labels(const std::string& path) {
    std::vector<LabeledExample> out;
    for_each_jsonl(path, [&](const ordered_json& j) {
        LabeledExample e;
        e.trial_id = get_string(j, "trial_id");
        if (!j.contains("statement_ids") || !j.at("statement_ids").is_array())
            throw DataError("\"statement_ids\" must be an array");
        for (const auto& sj : j.at("statement_ids")) e.statement_ids.push_back(sj.get<std::string>());
        if (e.statement_ids.empty()) throw DataError("empty statement_ids");
        e.patient_id = get_string(j, "patient_id");
        e.label = parse_label(get_string(j, "label"));
        out.push_back(std::move(e));
    });
    return out;
}

void save_labels(const std::string& path, const std::vector<LabeledExample>& examples) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot open " + path + " for writing");
    for (const auto& e : examples) {
        ordered_json j;
        j["trial_id"] = e.trial_id;
        j["statement_ids"] = e.statement_ids;
        j["patient_id"] = e.patient_id;
        j["label"] = label_name(e.label);
        os << j.dump() << "\n";
    }
    if (!os) throw DataError("write failed: " + path);
}

const TrialCriteria* Dataset::find_trial(const std::string& id) const {
    for (const auto& t : trials)
        if (t.trial_id == id) return &t;
    return nullptr;
}

const PatientRecord* Dataset::find_patient(const std::string& id) const {
    for (const auto& p : patients)
        if (p.patient_id == id) return &p;
    return nullptr;
}

Dataset load_dataset(const std::string& dir, const std::unordered_set<std::string>* known_units) {
    Dataset ds;
    ds.trials = load_trials(dir + "/trials.jsonl");
    ds.patients = load_patients(dir + "/patients.jsonl", known_units);
    ds.examples = load_labels(dir + "/labels.jsonl");
    validate_examples(ds);
    return ds;
}

void validate_examples(const Dataset& ds) {
    std::unordered_map<std::string, const TrialCriteria*> trials;
    for (const auto& t : ds.trials) trials.emplace(t.trial_id, &t);
    std::unordered_set<std::string> patients;
    for (const auto& p : ds.patients) patients.insert(p.patient_id);
    for (const auto& e : ds.examples) {
        auto it = trials.find(e.trial_id);
        if (it == trials.end()) throw DataError("example references unknown trial " + e.trial_id);
        for (const auto& sid : e.statement_ids)
            if (it->second->find_statement(sid) == nullptr)
                throw DataError("example references unknown statement " + sid + " in trial " +
                                e.trial_id);
        if (!patients.count(e.patient_id))
            throw DataError("example references unknown patient " + e.patient_id);
    }
}

SplitResult split_dataset(const std::vector<LabeledExample>& examples, uint64_t seed) {
    std::vector<std::string> ids;
    {
        std::unordered_set<std::string> seen;
        for (const auto& e : examples)
            if (seen.insert(e.patient_id).second) ids.push_back(e.patient_id);
    }
    if (ids.size() < 5)
        throw DataError("split needs at least 5 distinct patients, got " +
                        std::to_string(ids.size()));
    std::sort(ids.begin(), ids.end());
    Rng rng(seed);
    rng.shuffle(ids);
    const auto n = static_cast<double>(ids.size());
    const auto n_train = static_cast<size_t>(std::llround(0.6 * n));
    const auto n_dev = static_cast<size_t>(std::llround(0.2 * n));
    std::unordered_map<std::string, int> bucket;
    for (size_t i = 0; i < ids.size(); ++i)
        bucket[ids[i]] = i < n_train ? 0 : (i < n_train + n_dev ? 1 : 2);
    SplitResult out;
    for (const auto& e : examples) {
        switch (bucket.at(e.patient_id)) {
            case 0: out.train.push_back(e); break;
            case 1: out.dev.push_back(e); break;
            default: out.test.push_back(e); break;
        }
    }
    return out;
}

}  // namespace enroll
