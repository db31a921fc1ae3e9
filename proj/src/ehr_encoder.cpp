#include "enroll/ehr_encoder.h"
#include "enroll/errors.h"

#include <set>

namespace enroll {

namespace {

Var embed_code(ModelGraph& g, const std::string& code, const Vocabulary& vocab,
               const char* table, const char* bias) {
    const size_t idx = vocab.index_or_unk(code);
    return g.tape.relu(g.tape.add(g.tape.row(g.p(table), idx), g.p(bias)));
}

Var sum_vars(ModelGraph& g, const std::vector<Var>& vars) {
    Var acc = vars.front();
    for (size_t i = 1; i < vars.size(); ++i) acc = g.tape.add(acc, vars[i]);
    return acc;
}

} // namespace

Var embed_diag(ModelGraph& g, const std::string& code) {
    return embed_code(g, code, g.model.vocabs().diagnoses, "ehr.diag_emb", "ehr.diag_b");
}

Var embed_treat(ModelGraph& g, const std::string& code) {
    return embed_code(g, code, g.model.vocabs().treatments, "ehr.treat_emb", "ehr.treat_b");
}

Var embed_demo(ModelGraph& g, const std::string& key_value) {
    return embed_code(g, key_value, g.model.vocabs().demographics, "ehr.demo_emb", "ehr.demo_b");
}

Var treatment_interaction(ModelGraph& g, Var r_d, Var r_m) {
    return g.tape.mul(g.tape.relu(g.tape.matvec(g.p("ehr.w_m"), r_d)), r_m);
}

Var visit_embed(ModelGraph& g, const Visit& visit) {
    Var r_d = embed_diag(g, visit.diagnosis);
    const std::set<std::string> treatments(visit.treatments.begin(), visit.treatments.end());
    Var acc = r_d;
    for (const auto& code : treatments) {
        acc = g.tape.add(acc, treatment_interaction(g, r_d, embed_treat(g, code)));
    }
    return g.tape.relu(g.tape.matvec(g.p("ehr.w_o"), acc));
}

Var patient_embed(ModelGraph& g, const std::vector<Var>& demo_vars,
                  const std::vector<Var>& visit_vars) {
    if (visit_vars.empty()) throw DataError("patient_embed needs at least one visit");
    Var acc = g.tape.matvec(g.p("ehr.w_p2"), sum_vars(g, visit_vars));
    if (!demo_vars.empty()) {
        acc = g.tape.add(acc, g.tape.matvec(g.p("ehr.w_p1"), sum_vars(g, demo_vars)));
    }
    return g.tape.relu(acc);
}

AuxPrediction aux_predict(ModelGraph& g, Var v) {
    AuxPrediction out;
    out.diag_probs = g.tape.softmax(g.tape.matvec(g.p("ehr.u_d"), v));
    out.treat_logits = g.tape.matvec(g.p("ehr.u_m"), v);
    out.treat_probs = g.tape.sigmoid(out.treat_logits);
    return out;
}

AuxLoss aux_loss(ModelGraph& g, const PatientRecord& patient,
                 const std::vector<Var>& visit_vars) {
    if (visit_vars.size() != patient.visits.size()) {
        throw DimError("aux_loss: visit embedding count does not match record");
    }
    const auto& vocabs = g.model.vocabs();
    std::vector<Var> diag_terms, treat_terms;
    for (size_t i = 0; i < patient.visits.size(); ++i) {
        const Visit& visit = patient.visits[i];
        AuxPrediction pred = aux_predict(g, visit_vars[i]);
        diag_terms.push_back(
            g.tape.cross_entropy(pred.diag_probs, vocabs.diagnoses.index_or_unk(visit.diagnosis)));
        Tensor targets = Tensor::zeros({vocabs.treatments.size()});
        for (const auto& code : visit.treatments) {
            targets.values[vocabs.treatments.index_or_unk(code)] = 1.0;
        }
        treat_terms.push_back(g.tape.bce_logits_mean(pred.treat_logits, std::move(targets)));
    }
    const double inv = 1.0 / static_cast<double>(patient.visits.size());
    return {g.tape.scale(sum_vars(g, diag_terms), inv),
            g.tape.scale(sum_vars(g, treat_terms), inv)};
}

PatientEncoding encode_patient(ModelGraph& g, const PatientRecord& patient) {
    if (patient.visits.empty()) {
        throw DataError("patient " + patient.patient_id + " has no visits");
    }
    PatientEncoding out;
    for (const auto& visit : patient.visits) {
        out.visit_vars.push_back(visit_embed(g, visit));
        out.row_ids.push_back(visit.visit_id);
    }
    std::vector<Var> demo_vars;
    for (const auto& [key, value] : patient.demographics) {
        demo_vars.push_back(embed_demo(g, demo_key_value(key, value)));
    }
    out.patient_var = patient_embed(g, demo_vars, out.visit_vars);
    out.row_ids.push_back("patient");
    std::vector<Var> rows = out.visit_vars;
    rows.push_back(out.patient_var);
    out.matrix = g.tape.stack_rows(rows);
    return out;
}

} // namespace enroll
