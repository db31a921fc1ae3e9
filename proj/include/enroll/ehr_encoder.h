#pragma once

#include <string>
#include <vector>

#include "enroll/model.h"

namespace enroll {

// Hypothesis-side tower: code embeddings r(·), diagnosis–treatment
// interaction g, visit embedding v_i, patient-level embedding h, and the
// per-visit auxiliary heads.

// one-hot lookup + bias + ReLU, dim z; unknown codes take the UNK row.
Var embed_diag(ModelGraph& g, const std::string& code);
Var embed_treat(ModelGraph& g, const std::string& code);
Var embed_demo(ModelGraph& g, const std::string& key_value);

// ReLU(W_m · r_d) ⊙ r_m; zero in either embedding absorbs to zero.
Var treatment_interaction(ModelGraph& g, Var r_d, Var r_m);

// ReLU(W_o (r(d) + Σ_j g(d, m_j))); treatments are a set — duplicates count
// once and order never matters (summed in sorted order).
Var visit_embed(ModelGraph& g, const Visit& visit);

// ReLU(W_p1 Σ r(p_k) + W_p2 Σ v_i); demographics may be empty, visits not.
Var patient_embed(ModelGraph& g, const std::vector<Var>& demo_vars,
                  const std::vector<Var>& visit_vars);

struct AuxPrediction {
    Var diag_probs;   // softmax over diagnosis vocab
    Var treat_logits; // pre-sigmoid, for the numerically fused BCE
    Var treat_probs;  // sigmoid per treatment code
};
AuxPrediction aux_predict(ModelGraph& g, Var v);

// Mean-over-visits auxiliary losses against each visit's own codes.
struct AuxLoss {
    Var diag_ce;
    Var treat_bce;
};
AuxLoss aux_loss(ModelGraph& g, const PatientRecord& patient, const std::vector<Var>& visit_vars);

// The hypothesis set fed to alignment: one row per visit plus a final row
// for the patient-level embedding, so demographic criteria can align too.
struct PatientEncoding {
    std::vector<Var> visit_vars;         // v_1..v_N
    Var patient_var;                     // h
    Var matrix;                          // (N+1)×o
    std::vector<std::string> row_ids;    // visit ids + "patient"
};
PatientEncoding encode_patient(ModelGraph& g, const PatientRecord& patient);

} // namespace enroll
