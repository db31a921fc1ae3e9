#pragma once

#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "enroll/model.h"

namespace enroll {

// Decomposable soft alignment between the premise matrix U (EC statements)
// and hypothesis matrix V (visits + patient row), followed by comparison,
// aggregation and 3-way classification.

// score(i,j) = ReLU(W_c u_i + b_c) · ReLU(W_c v_j + b_c); all scores ≥ 0.
Var attention_scores(ModelGraph& g, Var u, Var v);

struct Aligned {
    Var beta_weights;  // M×N, rows softmax-normalized over hypotheses
    Var alpha_weights; // N×M, rows softmax-normalized over premises
    Var beta;          // M×o, aligned hypothesis content per premise
    Var alpha;         // N×o, aligned premise content per hypothesis
};
Aligned soft_align(ModelGraph& g, Var scores, Var u, Var v);

// r1_i = ReLU(W_a [u_i ; β_i] + b_a) and r2_j likewise through the SAME
// layer, applied exactly M + N times (tracked in g.compare_count).
std::pair<Var, Var> compare(ModelGraph& g, Var u, Var beta, Var v, Var alpha);

// m = [Σr1 ; Σr2 ; Σr1 ⊙ Σr2 ; Σr1 − Σr2]
Var aggregate(ModelGraph& g, Var r1_rows, Var r2_rows);

Label argmax_label(const Tensor& probs); // ties: entailment < contradiction < neutral

struct Classified {
    Var probs;
    Label label = Label::entailment;
};
// Optional hidden layer; width 0 degenerates to the bare affine + softmax.
Classified classify(ModelGraph& g, Var m);

struct AlignOutput {
    Var scores;
    Aligned aligned;
    Var r1_rows;
    Var r2_rows;
    Var m;
    Var probs;
    Label label = Label::entailment;
};
AlignOutput align_and_classify(ModelGraph& g, Var u, Var v);

// One CSV row per (statement, hypothesis row) with the weight used to form
// β, i.e. how much of each EHR row the statement attends to.
void write_heatmap_csv(std::ostream& os, const std::string& trial_id,
                       const std::vector<std::string>& statement_ids,
                       const std::string& patient_id,
                       const std::vector<std::string>& hypothesis_row_ids,
                       const Tensor& beta_weights, bool header);

} // namespace enroll
