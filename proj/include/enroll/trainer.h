#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "enroll/data.h"
#include "enroll/metrics.h"
#include "enroll/model.h"
#include "enroll/nir.h"

namespace enroll {

struct TrainConfig {
    double lr0 = 0.1;
    size_t batch_size = 64;
    double lr_divisor = 5.0;
    // literal reading of the schedule threshold; 1e-5 is the other plausible
    // parse of the same figure, hence a knob rather than a constant
    double stop_lr = 1e-4;
    double dropout = 0.5;
    double aux_weight = 0.1;
    double l2 = 1e-4;
    // the lr rule is the real stopping criterion; this is a safety cap sized
    // so a full desk run stays inside a ten-minute single-core budget
    size_t max_epochs = 80;
    uint64_t seed = 42;
};

// id → record lookups, built once per fit/eval pass
struct DatasetIndex {
    std::unordered_map<std::string, const TrialCriteria*> trials;
    std::unordered_map<std::string, const PatientRecord*> patients;

    explicit DatasetIndex(const Dataset& data);
    const TrialCriteria& trial(const std::string& id) const;
    const PatientRecord& patient(const std::string& id) const;
};

// Mean over the batch of (3-class CE + aux_weight·diagnosis CE +
// aux_weight·treatment BCE). When grads is non-null the backward pass runs
// and mean gradients are accumulated into it (same layout as model params).
double compute_loss(const Model& model, const DatasetIndex& index,
                    const std::vector<const LabeledExample*>& batch, double aux_weight,
                    Rng* dropout_rng, double dropout_rate, ParameterStore* grads);

// Fraction of examples whose predicted label matches gold; inference mode.
// With a verdict list (one precomputed quantity verdict per example, aligned
// by position) the prediction scored is the combined final decision.
double neural_accuracy(const Model& model, const DatasetIndex& index,
                       const std::vector<const LabeledExample*>& examples,
                       const std::vector<QuantityVerdict>* verdicts = nullptr);

struct LrDecision {
    double lr = 0.0;
    bool stop = false;
};
// Divides lr when the newest dev accuracy is below the previous one; signals
// STOP once lr falls under stop_lr.
LrDecision lr_schedule(const std::vector<double>& dev_accuracy_history, double lr,
                       double divisor, double stop_lr);

struct EpochStats {
    size_t epoch = 0; // 1-based
    double loss = 0.0;
    double dev_accuracy = 0.0;
    double lr = 0.0; // rate used during this epoch
};

struct TrainResult {
    ParameterStore best_params; // highest dev accuracy (earliest on ties)
    double best_dev_accuracy = -1.0;
    size_t best_epoch = 0;
    std::vector<EpochStats> log;
};

// SGD over shuffled batches with the dev-driven schedule. Deterministic for
// a fixed seed; max_epochs 0 returns the initialization unchanged. The model
// is left holding the final-epoch params; best_params carries the checkpoint.
//
// When the unit table and comparator lexicon are supplied, the per-epoch dev
// accuracy is the accuracy of the full matching decision — the quantity
// override included, exactly as match() decides at inference. The override's
// verdicts do not depend on the parameters, so they are computed once up
// front. Scoring the decision the system actually ships also keeps the rate
// schedule away from the examples the embedding model cannot decide (numeric
// thresholds are invisible to it by construction), whose per-epoch churn
// otherwise reads as spurious dev regressions. Without the two resources the
// dev score falls back to the bare classifier accuracy.
TrainResult fit(Model& model, const Dataset& data,
                const std::vector<const LabeledExample*>& train,
                const std::vector<const LabeledExample*>& dev, const TrainConfig& cfg,
                const UnitTable* units = nullptr, const ComparatorLexicon* lexicon = nullptr);

void write_train_log_csv(std::ostream& os, const std::vector<EpochStats>& log);

} // namespace enroll
