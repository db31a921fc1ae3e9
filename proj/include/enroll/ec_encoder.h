#pragma once

#include <map>
#include <string>
#include <vector>

#include "enroll/model.h"

namespace enroll {

// Premise-side encoder: token embeddings (unseen tokens hash into dedicated
// bucket rows) → mean pooling → affine + ReLU into the shared latent space.

// Empty token list encodes to the zero vector of dim o; that is a defined
// case, not an error.
Var encode_sentence(ModelGraph& g, const std::vector<std::string>& tokens);

// The example's view of a trial: the listed statements in statement order,
// or all of them when ids is empty. Unknown ids throw DataError.
std::vector<const ECStatement*> select_statements(const TrialCriteria& trial,
                                                  const std::vector<std::string>& ids);

// M×o premise matrix, row i = encode_sentence(statement i). M ≥ 1 required.
Var encode_trial(ModelGraph& g, const TrialCriteria& trial,
                 const std::vector<std::string>& statement_ids = {});

// Drop-in alternative to the trainable encoder: per-statement vectors
// computed elsewhere and loaded from JSON Lines
// {"trial_id","statement_id","vector":[...]} with vector length o.
class PrecomputedEncoder {
  public:
    PrecomputedEncoder(const std::string& path, size_t latent_dim);

    bool has(const std::string& trial_id, const std::string& statement_id) const;
    const Tensor& vector_for(const std::string& trial_id, const std::string& statement_id) const;
    // Same shape contract as encode_trial; rows are constants on the tape.
    Var encode_trial(ModelGraph& g, const TrialCriteria& trial,
                     const std::vector<std::string>& statement_ids = {}) const;
    size_t size() const { return vectors_.size(); }

  private:
    std::map<std::pair<std::string, std::string>, Tensor> vectors_;
};

} // namespace enroll
