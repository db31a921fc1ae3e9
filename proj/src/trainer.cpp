#include "enroll/trainer.h"

#include <cstdio>

#include "enroll/aligner.h"
#include "enroll/ec_encoder.h"
#include "enroll/ehr_encoder.h"
#include "enroll/errors.h"
#include "enroll/kernel.h"
#include "enroll/matcher.h"

namespace enroll {

DatasetIndex::DatasetIndex(const Dataset& data) {
    for (const auto& t : data.trials) trials.emplace(t.trial_id, &t);
    for (const auto& p : data.patients) patients.emplace(p.patient_id, &p);
}

const TrialCriteria& DatasetIndex::trial(const std::string& id) const {
    auto it = trials.find(id);
    if (it == trials.end()) throw DataError("unknown trial " + id);
    return *it->second;
}

const PatientRecord& DatasetIndex::patient(const std::string& id) const {
    auto it = patients.find(id);
    if (it == patients.end()) throw DataError("unknown patient " + id);
    return *it->second;
}

namespace {

Var example_loss(ModelGraph& g, const DatasetIndex& index, const LabeledExample& ex,
                 double aux_weight) {
    const TrialCriteria& trial = index.trial(ex.trial_id);
    const PatientRecord& patient = index.patient(ex.patient_id);
    Var u = encode_trial(g, trial, ex.statement_ids);
    PatientEncoding enc = encode_patient(g, patient);
    AlignOutput out = align_and_classify(g, u, enc.matrix);
    Var loss = g.tape.cross_entropy(out.probs, static_cast<size_t>(ex.label));
    if (aux_weight > 0.0) {
        AuxLoss aux = aux_loss(g, patient, enc.visit_vars);
        loss = g.tape.add(loss, g.tape.scale(aux.diag_ce, aux_weight));
        loss = g.tape.add(loss, g.tape.scale(aux.treat_bce, aux_weight));
    }
    return loss;
}

} // namespace

double compute_loss(const Model& model, const DatasetIndex& index,
                    const std::vector<const LabeledExample*>& batch, double aux_weight,
                    Rng* dropout_rng, double dropout_rate, ParameterStore* grads) {
    if (batch.empty()) throw DataError("compute_loss needs a nonempty batch");
    Tape tape;
    ParamVars pv = leaf_params(tape, model.params());
    ModelGraph g(tape, model, pv, dropout_rng);
    g.dropout_rate = dropout_rate;

    Var acc = example_loss(g, index, *batch.front(), aux_weight);
    for (size_t i = 1; i < batch.size(); ++i) {
        acc = tape.add(acc, example_loss(g, index, *batch[i], aux_weight));
    }
    Var loss = tape.scale(acc, 1.0 / static_cast<double>(batch.size()));
    if (grads != nullptr) {
        tape.backward(loss);
        accumulate_grads(*grads, tape, pv, 1.0);
    }
    return tape.val(loss).values[0];
}

double neural_accuracy(const Model& model, const DatasetIndex& index,
                       const std::vector<const LabeledExample*>& examples,
                       const std::vector<QuantityVerdict>* verdicts) {
    if (examples.empty()) throw DataError("cannot score an empty example list");
    size_t hits = 0;
    for (size_t i = 0; i < examples.size(); ++i) {
        const LabeledExample* ex = examples[i];
        Tape tape;
        ModelGraph g(tape, model);
        Var u = encode_trial(g, index.trial(ex->trial_id), ex->statement_ids);
        PatientEncoding enc = encode_patient(g, index.patient(ex->patient_id));
        AlignOutput out = align_and_classify(g, u, enc.matrix);
        Label pred = verdicts ? combine_labels(out.label, (*verdicts)[i]) : out.label;
        hits += (pred == ex->label) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(examples.size());
}

LrDecision lr_schedule(const std::vector<double>& dev_accuracy_history, double lr,
                       double divisor, double stop_lr) {
    if (dev_accuracy_history.empty()) throw DataError("lr_schedule needs a completed epoch");
    if (divisor <= 1.0) throw DataError("lr divisor must exceed 1");
    const size_t n = dev_accuracy_history.size();
    double next = lr;
    if (n >= 2 && dev_accuracy_history[n - 1] < dev_accuracy_history[n - 2]) next = lr / divisor;
    return {next, next < stop_lr};
}

TrainResult fit(Model& model, const Dataset& data,
                const std::vector<const LabeledExample*>& train,
                const std::vector<const LabeledExample*>& dev, const TrainConfig& cfg,
                const UnitTable* units, const ComparatorLexicon* lexicon) {
    if (train.empty()) throw DataError("training split is empty");
    if (dev.empty()) throw DataError("dev split is empty");

    DatasetIndex index(data);

    // Quantity verdicts are a function of the data alone, so the dev set's
    // verdicts are fixed for the whole run.
    std::vector<QuantityVerdict> dev_verdicts;
    const std::vector<QuantityVerdict>* verdicts = nullptr;
    if (units != nullptr && lexicon != nullptr) {
        dev_verdicts.reserve(dev.size());
        for (const LabeledExample* ex : dev) {
            const TrialCriteria& trial = index.trial(ex->trial_id);
            std::vector<ECStatement> subset;
            for (const ECStatement* st : select_statements(trial, ex->statement_ids))
                subset.push_back(*st);
            dev_verdicts.push_back(
                quantity_match(subset, index.patient(ex->patient_id), *units, *lexicon));
        }
        verdicts = &dev_verdicts;
    }

    // Start the final bias at the log class priors of the training split.
    // Until the feature pathway wakes up, every logit is bias-dominated, so
    // the model predicts the majority class outright instead of flip-flopping
    // between classes on near-zero logit noise. That keeps the early dev
    // accuracies exactly constant, and the schedule only cuts the rate on a
    // strict decrease — a knife-edge start would burn most of the rate budget
    // before any signal arrives.
    {
        std::array<double, 3> counts = {0.0, 0.0, 0.0};
        for (const LabeledExample* e : train) counts[static_cast<size_t>(e->label)] += 1.0;
        Tensor& b_f = model.params().at("clf.b_f");
        for (size_t k = 0; k < 3; ++k)
            b_f.values[k] = std::log(std::max(counts[k], 1.0) / static_cast<double>(train.size()));
    }

    TrainResult result;
    result.best_params = model.params();

    Rng shuffle_rng(cfg.seed);
    Rng dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<const LabeledExample*> order = train;
    std::vector<double> acc_history;
    double lr = cfg.lr0;

    ParameterStore grads = model.params();
    for (size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        size_t batches = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<const LabeledExample*> batch(order.begin() + static_cast<long>(start),
                                                     order.begin() + static_cast<long>(end));
            grads.zero_all();
            loss_sum += compute_loss(model, index, batch, cfg.aux_weight, &dropout_rng,
                                     cfg.dropout, &grads);
            sgd_step(model.params(), grads, lr, cfg.l2);
            ++batches;
        }
        const double dev_acc = neural_accuracy(model, index, dev, verdicts);
        acc_history.push_back(dev_acc);
        result.log.push_back({epoch, loss_sum / static_cast<double>(batches), dev_acc, lr});
        if (dev_acc > result.best_dev_accuracy) {
            result.best_dev_accuracy = dev_acc;
            result.best_epoch = epoch;
            result.best_params = model.params();
        }
        LrDecision dec = lr_schedule(acc_history, lr, cfg.lr_divisor, cfg.stop_lr);
        lr = dec.lr;
        if (dec.stop) break;
    }
    return result;
}

void write_train_log_csv(std::ostream& os, const std::vector<EpochStats>& log) {
    os << "epoch,loss,dev_accuracy,lr\n";
    char buf[96];
    for (const auto& e : log) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", e.epoch, e.loss,
                      e.dev_accuracy, e.lr);
        os << buf;
    }
}

} // namespace enroll
