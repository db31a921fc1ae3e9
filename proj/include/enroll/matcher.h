#pragma once

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

#include "enroll/aligner.h"
#include "enroll/ec_encoder.h"
#include "enroll/ehr_encoder.h"
#include "enroll/model.h"
#include "enroll/nir.h"

namespace enroll {

// Full per-example verdict: neural entailment from the aligner, the quantity
// check over the same statements, and the composed final label. The neural
// label only survives as "entailment" when the numbers agree; a failed
// quantity check downgrades it to contradiction. Contradiction and neutral
// pass through untouched.
struct MatchResult {
    Label neural_label = Label::neutral;
    std::array<double, 3> neural_probs{};
    QuantityVerdict quantity = QuantityVerdict::entailment;
    Label final_label = Label::neutral;
    // neural probs with the entailment/contradiction mass swapped when the
    // quantity override fires, so ranking metrics see the final decision
    std::array<double, 3> final_probs{};

    // attention export: beta weights over (statements × hypothesis rows)
    std::vector<std::string> statement_ids;
    std::vector<std::string> hypothesis_row_ids;
    Tensor beta_weights;
};

Label combine_labels(Label neural, QuantityVerdict quantity);

// Deterministic inference for one (trial subset, patient) pair; dropout off.
// use_nir=false is the ablation: the neural label stands as-is.
MatchResult match(const Model& model, const TrialCriteria& trial,
                  const std::vector<std::string>& statement_ids, const PatientRecord& patient,
                  const UnitTable& units, const ComparatorLexicon& lexicon, bool use_nir = true);

// One output row: {"trial_id","patient_id","neural_label","neural_probs",
// "quantity_verdict","final_label"}
nlohmann::ordered_json match_row(const std::string& trial_id, const std::string& patient_id,
                                 const MatchResult& result);

} // namespace enroll
