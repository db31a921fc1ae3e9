#include "enroll/model.h"

#include <cmath>

#include "enroll/errors.h"
#include "enroll/text.h"

namespace enroll {

std::string demo_key_value(const std::string& key, const std::string& value) {
    // Years are bucketed by decade. Raw years would each get their own
    // embedding row — dozens of near-singleton codes whose random vectors
    // just add per-patient noise — while age thresholds are decided by the
    // quantity override, not by this pathway.
    if (key == "birth_year") {
        const long year = std::strtol(value.c_str(), nullptr, 10);
        return key + "=" + std::to_string(year - (year % 10 + 10) % 10) + "s";
    }
    return key + "=" + value;
}

Vocabularies build_vocabularies(const std::vector<TrialCriteria>& trials,
                                const std::vector<PatientRecord>& train_patients) {
    Vocabularies v;
    for (const auto& trial : trials) {
        for (const auto& st : trial.statements) {
            for (const auto& tok : tokenize(st.text)) v.tokens.add(tok);
        }
    }
    v.diagnoses.add(Vocabulary::kUnk);
    v.treatments.add(Vocabulary::kUnk);
    v.demographics.add(Vocabulary::kUnk);
    for (const auto& p : train_patients) {
        for (const auto& visit : p.visits) {
            v.diagnoses.add(visit.diagnosis);
            for (const auto& t : visit.treatments) v.treatments.add(t);
        }
        for (const auto& [key, value] : p.demographics) {
            v.demographics.add(demo_key_value(key, value));
        }
    }
    return v;
}

Model::Model(ModelConfig cfg, Vocabularies vocabs, uint64_t seed)
    : cfg_(cfg), vocabs_(std::move(vocabs)) {
    if (cfg_.token_embed_dim == 0 || cfg_.latent_dim == 0 || cfg_.code_dim == 0 ||
        cfg_.hash_buckets == 0) {
        throw DimError("model dims must be positive");
    }
    const size_t e = cfg_.token_embed_dim;
    const size_t o = cfg_.latent_dim;
    const size_t z = cfg_.code_dim;
    const size_t n_tok = vocabs_.tokens.size() + cfg_.hash_buckets;
    const size_t n_diag = vocabs_.diagnoses.size();
    const size_t n_treat = vocabs_.treatments.size();
    const size_t n_demo = vocabs_.demographics.size();

    Rng rng(seed);
    // Three init scales. Embedding tables (the analogue of word vectors and
    // hashed OOV rows) start at unit scale. The encoder towers and the
    // attention projection use 1/sqrt(fan_in) so their outputs stay at unit
    // scale too: the attention score for a pair is a product of two
    // projections, and at 0.01 the score spread collapses to ~1e-4, the
    // softmax stays uniform to four decimals, and no gradient ever reaches
    // the projection — the alignment deadlocks at these widths (measured:
    // w_c unchanged after six epochs of SGD at lr 0.1). Prediction heads and
    // the compare/classifier hidden layers keep the 0.01 scale; their
    // gradient paths have no such product bottleneck and the small start
    // keeps the aggregate features gentle under a 0.1 learning rate.
    auto table = [&](const std::string& name, Shape shape) {
        params_.add(name, Tensor::gaussian(std::move(shape), rng, 0.0, 1.0));
    };
    auto tower = [&](const std::string& name, Shape shape) {
        double sigma = 1.0 / std::sqrt(static_cast<double>(shape[1]));
        params_.add(name, Tensor::gaussian(std::move(shape), rng, 0.0, sigma));
    };
    auto weight = [&](const std::string& name, Shape shape) {
        params_.add(name, Tensor::gaussian(std::move(shape), rng, 0.0, 0.01));
    };
    auto bias = [&](const std::string& name, size_t dim) {
        params_.add(name, Tensor::zeros({dim}));
    };

    table("enc.tok_emb", {n_tok, e});
    tower("enc.proj_w", {o, e});
    bias("enc.proj_b", o);

    table("ehr.diag_emb", {n_diag, z});
    bias("ehr.diag_b", z);
    table("ehr.treat_emb", {n_treat, z});
    bias("ehr.treat_b", z);
    table("ehr.demo_emb", {n_demo, z});
    bias("ehr.demo_b", z);
    tower("ehr.w_m", {z, z});
    tower("ehr.w_o", {o, z});
    tower("ehr.w_p1", {o, z});
    tower("ehr.w_p2", {o, o});
    // The auxiliary heads read the visit variable the same way the towers
    // read their inputs, and they get the same scale. At 0.01 the auxiliary
    // losses crawl for a dozen epochs, and while they crawl their gradients
    // keep washing through the shared visit tower; at 1/sqrt(fan_in) they
    // converge in a few epochs and get out of the matching loss's way.
    tower("ehr.u_d", {n_diag, o});
    tower("ehr.u_m", {n_treat, o});

    tower("align.w_c", {o, o});
    bias("align.b_c", o);
    // The comparison transform is a tower too: at 0.01 its outputs are ~0.1
    // scale, the aggregate the classifier sees is ~0.01 scale, and the label
    // gradient takes several epochs just to grow the comparison weights back
    // to working size (measured: takeoff moves from epoch ~12 to ~4 with
    // fan-in scale here). The two classifier layers must NOT get the same
    // treatment: with either of them at fan-in scale the first epoch of SGD
    // at lr 0.1 blows the logits past softmax saturation and the run never
    // recovers (label CE pinned at 16.9, every ReLU dead). Small classifier
    // weights keep early logits near zero, which is also what lets the final
    // bias track the class priors before the features arrive.
    tower("align.w_a", {o, 2 * o});
    bias("align.b_a", o);

    const size_t agg = 4 * o;
    if (cfg_.classifier_hidden > 0) {
        weight("clf.w_h", {cfg_.classifier_hidden, agg});
        bias("clf.b_h", cfg_.classifier_hidden);
        weight("clf.w_f", {3, cfg_.classifier_hidden});
    } else {
        weight("clf.w_f", {3, agg});
    }
    bias("clf.b_f", 3);
}

size_t Model::token_row(const std::string& token) const {
    if (vocabs_.tokens.contains(token)) return vocabs_.tokens.index_of(token);
    return vocabs_.tokens.size() + static_cast<size_t>(fnv1a(token) % cfg_.hash_buckets);
}

ModelGraph::ModelGraph(Tape& t, const Model& m, Rng* drop)
    : tape(t), model(m), dropout_rng(drop), dropout_rate(m.config().dropout) {
    for (const auto& name : m.params().names()) {
        param_vars_.emplace(name, tape.leaf(m.params().at(name)));
    }
}

ModelGraph::ModelGraph(Tape& t, const Model& m, const ParamVars& pv, Rng* drop)
    : tape(t), model(m), dropout_rng(drop), dropout_rate(m.config().dropout) {
    for (size_t i = 0; i < pv.names.size(); ++i) {
        param_vars_.emplace(pv.names[i], pv.vars[i]);
    }
}

Var ModelGraph::p(const std::string& name) const {
    auto it = param_vars_.find(name);
    if (it == param_vars_.end()) throw DimError("unknown parameter: " + name);
    return it->second;
}

Var ModelGraph::maybe_dropout(Var x) {
    if (dropout_rng == nullptr || dropout_rate <= 0.0) return x;
    return tape.dropout(x, *dropout_rng, dropout_rate);
}

} // namespace enroll
