#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "enroll/data.h"
#include "enroll/kernel.h"
#include "enroll/rng.h"
#include "enroll/tape.h"
#include "enroll/tensor.h"

namespace enroll {

// Dimensions and knobs shared by the encoder, EHR tower and aligner.
struct ModelConfig {
    size_t token_embed_dim = 32;   // per-token embedding width
    size_t latent_dim = 64;        // o: shared premise/hypothesis width
    size_t code_dim = 64;          // z: code embedding width
    size_t hash_buckets = 100;     // OOV token buckets
    size_t classifier_hidden = 64; // 0 = plain affine + softmax head
    double dropout = 0.5;          // applied after hidden activations while training
};

// Lookup tables the model indexes into. Token vocab has no UNK row; unseen
// tokens hash into dedicated bucket rows appended after the vocab. Code
// vocabs reserve index 0 for UNK.
struct Vocabularies {
    Vocabulary tokens;
    Vocabulary diagnoses;
    Vocabulary treatments;
    Vocabulary demographics; // entries are "key=value"
};

// Token vocab from every statement of every trial; code vocabs from the
// training patients only, so eval-time unknowns exercise the UNK path.
Vocabularies build_vocabularies(const std::vector<TrialCriteria>& trials,
                                const std::vector<PatientRecord>& train_patients);

std::string demo_key_value(const std::string& key, const std::string& value);

// Owns the parameter store plus everything needed to rebuild it: config,
// vocabularies, and the init seed.
class Model {
  public:
    Model(ModelConfig cfg, Vocabularies vocabs, uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    const Vocabularies& vocabs() const { return vocabs_; }
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }

    // row index into enc.tok_emb: vocab hit or hash bucket
    size_t token_row(const std::string& token) const;

  private:
    ModelConfig cfg_;
    Vocabularies vocabs_;
    ParameterStore params_;
};

// Per-example forward context: one tape, param leaves, optional dropout.
// compare_count tracks shared comparison-layer applications for the
// linear-complexity contract.
struct ModelGraph {
    Tape& tape;
    const Model& model;
    Rng* dropout_rng = nullptr;  // null → inference, dropout off
    double dropout_rate = 0.0;   // seeded from model config; trainers may override
    size_t compare_count = 0;

    ModelGraph(Tape& t, const Model& m, Rng* drop = nullptr);
    // Builds lookups from caller-provided leaves instead of m.params();
    // gradient-check harnesses perturb their own store and need the graph to
    // read from it.
    ModelGraph(Tape& t, const Model& m, const ParamVars& pv, Rng* drop = nullptr);

    Var p(const std::string& name) const;
    Var maybe_dropout(Var x);

  private:
    std::unordered_map<std::string, Var> param_vars_;
};

} // namespace enroll
