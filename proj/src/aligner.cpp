#include "enroll/aligner.h"
#include "enroll/errors.h"

#include <cstdio>

namespace enroll {

Var attention_scores(ModelGraph& g, Var u, Var v) {
    Var tu = g.tape.relu(g.tape.linear(u, g.p("align.w_c"), g.p("align.b_c")));
    Var tv = g.tape.relu(g.tape.linear(v, g.p("align.w_c"), g.p("align.b_c")));
    return g.tape.matmul_nt(tu, tv);
}

Aligned soft_align(ModelGraph& g, Var scores, Var u, Var v) {
    Aligned out;
    out.beta_weights = g.tape.row_softmax(scores);
    out.alpha_weights = g.tape.row_softmax(g.tape.transpose(scores));
    out.beta = g.tape.matmul(out.beta_weights, v);
    out.alpha = g.tape.matmul(out.alpha_weights, u);
    return out;
}

namespace {

// One shared-layer application per row; the counter is the point.
Var compare_rows(ModelGraph& g, Var a, Var b) {
    const size_t n = g.tape.val(a).rows();
    std::vector<Var> rows;
    rows.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        Var cat = g.tape.concat({g.tape.row(a, i), g.tape.row(b, i)});
        rows.push_back(g.tape.relu(g.tape.affine(cat, g.p("align.w_a"), g.p("align.b_a"))));
        ++g.compare_count;
    }
    // Dropout lives on the classifier hidden layer only. At this width,
    // masking half of every comparison row as well turns each step into a
    // different sub-network and the dev curve into a coin flip — and the
    // rate schedule treats every downtick as a signal to cut the rate.
    return g.tape.stack_rows(rows);
}

} // namespace

std::pair<Var, Var> compare(ModelGraph& g, Var u, Var beta, Var v, Var alpha) {
    return {compare_rows(g, u, beta), compare_rows(g, v, alpha)};
}

Var aggregate(ModelGraph& g, Var r1_rows, Var r2_rows) {
    Var r1 = g.tape.sum_rows(r1_rows);
    Var r2 = g.tape.sum_rows(r2_rows);
    return g.tape.concat({r1, r2, g.tape.mul(r1, r2), g.tape.sub(r1, r2)});
}

Label argmax_label(const Tensor& probs) {
    if (probs.numel() != 3) throw DimError("argmax_label expects a 3-vector");
    size_t best = 0;
    for (size_t i = 1; i < 3; ++i) {
        if (probs.values[i] > probs.values[best]) best = i;
    }
    return static_cast<Label>(best);
}

Classified classify(ModelGraph& g, Var m) {
    Var x = m;
    if (g.model.config().classifier_hidden > 0) {
        x = g.maybe_dropout(g.tape.relu(g.tape.affine(x, g.p("clf.w_h"), g.p("clf.b_h"))));
    }
    Classified out;
    out.probs = g.tape.softmax(g.tape.affine(x, g.p("clf.w_f"), g.p("clf.b_f")));
    out.label = argmax_label(g.tape.val(out.probs));
    return out;
}

AlignOutput align_and_classify(ModelGraph& g, Var u, Var v) {
    AlignOutput out;
    out.scores = attention_scores(g, u, v);
    out.aligned = soft_align(g, out.scores, u, v);
    std::tie(out.r1_rows, out.r2_rows) = compare(g, u, out.aligned.beta, v, out.aligned.alpha);
    out.m = aggregate(g, out.r1_rows, out.r2_rows);
    Classified cls = classify(g, out.m);
    out.probs = cls.probs;
    out.label = cls.label;
    return out;
}

void write_heatmap_csv(std::ostream& os, const std::string& trial_id,
                       const std::vector<std::string>& statement_ids,
                       const std::string& patient_id,
                       const std::vector<std::string>& hypothesis_row_ids,
                       const Tensor& beta_weights, bool header) {
    if (beta_weights.rows() != statement_ids.size() ||
        beta_weights.cols() != hypothesis_row_ids.size()) {
        throw DimError("heatmap shape does not match row/column labels");
    }
    if (header) os << "trial_id,statement_id,patient_id,hypothesis_row_id,normalized_weight\n";
    char buf[32];
    for (size_t i = 0; i < beta_weights.rows(); ++i) {
        for (size_t j = 0; j < beta_weights.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.6f", beta_weights.at(i, j));
            os << trial_id << ',' << statement_ids[i] << ',' << patient_id << ','
               << hypothesis_row_ids[j] << ',' << buf << '\n';
        }
    }
}

} // namespace enroll
