#include "enroll/matcher.h"

#include "enroll/errors.h"

namespace enroll {

Label combine_labels(Label neural, QuantityVerdict quantity) {
    switch (neural) {
        case Label::entailment:
            return quantity == QuantityVerdict::entailment ? Label::entailment
                                                           : Label::contradiction;
        case Label::contradiction:
            return Label::contradiction;
        case Label::neutral:
            return Label::neutral;
    }
    throw DataError("unreachable label");
}

MatchResult match(const Model& model, const TrialCriteria& trial,
                  const std::vector<std::string>& statement_ids, const PatientRecord& patient,
                  const UnitTable& units, const ComparatorLexicon& lexicon, bool use_nir) {
    MatchResult out;

    Tape tape;
    ModelGraph g(tape, model); // no dropout rng: inference mode
    Var u = encode_trial(g, trial, statement_ids);
    PatientEncoding enc = encode_patient(g, patient);
    AlignOutput align = align_and_classify(g, u, enc.matrix);

    out.neural_label = align.label;
    const Tensor& probs = tape.val(align.probs);
    for (size_t i = 0; i < 3; ++i) out.neural_probs[i] = probs.values[i];

    auto sts = select_statements(trial, statement_ids);
    out.statement_ids.reserve(sts.size());
    for (const ECStatement* st : sts) out.statement_ids.push_back(st->id);
    out.hypothesis_row_ids = enc.row_ids;
    out.beta_weights = tape.val(align.aligned.beta_weights);

    std::vector<ECStatement> subset;
    subset.reserve(sts.size());
    for (const ECStatement* st : sts) subset.push_back(*st);
    out.quantity = quantity_match(subset, patient, units, lexicon);

    out.final_probs = out.neural_probs;
    out.final_label = use_nir ? combine_labels(out.neural_label, out.quantity)
                              : out.neural_label;
    if (out.final_label != out.neural_label) {
        std::swap(out.final_probs[static_cast<size_t>(Label::entailment)],
                  out.final_probs[static_cast<size_t>(Label::contradiction)]);
    }
    return out;
}

nlohmann::ordered_json match_row(const std::string& trial_id, const std::string& patient_id,
                                 const MatchResult& result) {
    nlohmann::ordered_json j;
    j["trial_id"] = trial_id;
    j["patient_id"] = patient_id;
    j["neural_label"] = label_name(result.neural_label);
    j["neural_probs"] = result.neural_probs;
    j["quantity_verdict"] = verdict_name(result.quantity);
    j["final_label"] = label_name(result.final_label);
    return j;
}

} // namespace enroll
