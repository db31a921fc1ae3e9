#include "enroll/ec_encoder.h"
#include "enroll/errors.h"

#include <algorithm>
#include <fstream>

#include "enroll/jsonl.h"
#include "enroll/text.h"

namespace enroll {

Var encode_sentence(ModelGraph& g, const std::vector<std::string>& tokens) {
    const size_t o = g.model.config().latent_dim;
    if (tokens.empty()) return g.tape.leaf(Tensor::zeros({o}));
    std::vector<size_t> rows;
    rows.reserve(tokens.size());
    for (const auto& tok : tokens) rows.push_back(g.model.token_row(tok));
    // mean pooling is order-free; sorting makes that exact in floating point
    std::sort(rows.begin(), rows.end());
    Var pooled = g.tape.mean_rows(g.tape.gather_rows(g.p("enc.tok_emb"), std::move(rows)));
    return g.tape.relu(g.tape.affine(pooled, g.p("enc.proj_w"), g.p("enc.proj_b")));
}

std::vector<const ECStatement*> select_statements(const TrialCriteria& trial,
                                                  const std::vector<std::string>& ids) {
    std::vector<const ECStatement*> out;
    if (ids.empty()) {
        for (const auto& st : trial.statements) out.push_back(&st);
        return out;
    }
    for (const auto& id : ids) {
        const ECStatement* st = trial.find_statement(id);
        if (st == nullptr) {
            throw DataError("trial " + trial.trial_id + " has no statement " + id);
        }
        out.push_back(st);
    }
    return out;
}

Var encode_trial(ModelGraph& g, const TrialCriteria& trial,
                 const std::vector<std::string>& statement_ids) {
    auto sts = select_statements(trial, statement_ids);
    if (sts.empty()) throw DataError("trial " + trial.trial_id + " has no statements");
    std::vector<Var> rows;
    rows.reserve(sts.size());
    for (const ECStatement* st : sts) rows.push_back(encode_sentence(g, tokenize(st->text)));
    return g.tape.stack_rows(rows);
}

PrecomputedEncoder::PrecomputedEncoder(const std::string& path, size_t latent_dim) {
    for_each_jsonl(path, [&](const nlohmann::ordered_json& j) {
        std::string trial_id = get_string(j, "trial_id");
        std::string statement_id = get_string(j, "statement_id");
        if (!j.contains("vector") || !j.at("vector").is_array()) {
            throw DataError("missing vector array");
        }
        std::vector<double> values = j.at("vector").get<std::vector<double>>();
        if (values.size() != latent_dim) {
            throw DataError("vector length " + std::to_string(values.size()) +
                            " does not match latent dim " + std::to_string(latent_dim));
        }
        auto key = std::make_pair(std::move(trial_id), std::move(statement_id));
        if (!vectors_.emplace(key, Tensor({latent_dim}, std::move(values))).second) {
            throw DataError("duplicate vector for " + key.first + "/" + key.second);
        }
    });
}

bool PrecomputedEncoder::has(const std::string& trial_id, const std::string& statement_id) const {
    return vectors_.count({trial_id, statement_id}) > 0;
}

const Tensor& PrecomputedEncoder::vector_for(const std::string& trial_id,
                                             const std::string& statement_id) const {
    auto it = vectors_.find({trial_id, statement_id});
    if (it == vectors_.end()) {
        throw DataError("no precomputed vector for " + trial_id + "/" + statement_id);
    }
    return it->second;
}

Var PrecomputedEncoder::encode_trial(ModelGraph& g, const TrialCriteria& trial,
                                     const std::vector<std::string>& statement_ids) const {
    auto sts = select_statements(trial, statement_ids);
    if (sts.empty()) throw DataError("trial " + trial.trial_id + " has no statements");
    std::vector<Var> rows;
    rows.reserve(sts.size());
    for (const ECStatement* st : sts) {
        rows.push_back(g.tape.leaf(vector_for(trial.trial_id, st->id)));
    }
    return g.tape.stack_rows(rows);
}

} // namespace enroll
