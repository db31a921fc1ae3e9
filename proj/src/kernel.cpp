#include "enroll/kernel.h"

#include <algorithm>
#include <cmath>

#include "enroll/errors.h"

namespace enroll {

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (w.rank() != 2 || x.rank() != 1 || b.rank() != 1 || w.cols() != x.numel() ||
        w.rows() != b.numel())
        throw DimError("affine: W " + shape_str(w.shape) + " with x " + shape_str(x.shape) +
                       ", b " + shape_str(b.shape));
    const size_t m = w.rows(), n = w.cols();
    Tensor out(Shape{m});
    for (size_t j = 0; j < m; ++j) {
        double acc = b.values[j];
        const double* wr = &w.values[j * n];
        for (size_t i = 0; i < n; ++i) acc += wr[i] * x.values[i];
        out.values[j] = acc;
    }
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.values) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor softmax(const Tensor& x) {
    if (x.rank() != 1 || x.numel() < 1)
        throw DimError("softmax: nonempty rank-1 required, got " + shape_str(x.shape));
    Tensor out(x.shape);
    double mx = x.values[0];
    for (double v : x.values) mx = std::max(mx, v);
    double sum = 0.0;
    for (size_t i = 0; i < x.numel(); ++i) {
        out.values[i] = std::exp(x.values[i] - mx);
        sum += out.values[i];
    }
    for (double& v : out.values) v /= sum;
    return out;
}

double cross_entropy(const Tensor& pred, size_t gold) {
    if (pred.rank() != 1) throw DimError("cross_entropy: rank-1 required");
    if (gold >= pred.numel())
        throw DataError("cross_entropy: gold index " + std::to_string(gold) + " out of range " +
                        std::to_string(pred.numel()));
    return -std::log(std::max(pred.values[gold], 1e-12));
}

void sgd_step(ParameterStore& params, const ParameterStore& grads, double lr, double l2) {
    if (params.size() != grads.size())
        throw DimError("sgd_step: store sizes differ, " + std::to_string(params.size()) + " vs " +
                       std::to_string(grads.size()));
    for (const std::string& name : params.names()) {
        if (!grads.has(name)) throw DimError("sgd_step: grads missing tensor " + name);
        Tensor& w = params.at(name);
        const Tensor& g = grads.at(name);
        if (!w.same_shape(g))
            throw DimError("sgd_step: " + name + " shape " + shape_str(w.shape) + " vs grad " +
                           shape_str(g.shape));
        for (size_t i = 0; i < w.numel(); ++i)
            w.values[i] -= lr * (g.values[i] + l2 * w.values[i]);
    }
}

Var ParamVars::at(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return vars[i];
    throw DataError("ParamVars: unknown parameter " + name);
}

ParamVars leaf_params(Tape& tape, const ParameterStore& params) {
    ParamVars pv;
    for (const std::string& name : params.names()) {
        pv.names.push_back(name);
        pv.vars.push_back(tape.leaf(params.at(name)));
    }
    return pv;
}

void accumulate_grads(ParameterStore& into, const Tape& tape, const ParamVars& pv, double scale) {
    for (size_t i = 0; i < pv.names.size(); ++i) {
        Tensor& dst = into.at(pv.names[i]);
        const Tensor& g = tape.grad(pv.vars[i]);
        if (!dst.same_shape(g))
            throw DimError("accumulate_grads: " + pv.names[i] + " shape " + shape_str(dst.shape) +
                           " vs grad " + shape_str(g.shape));
        for (size_t j = 0; j < dst.numel(); ++j) dst.values[j] += scale * g.values[j];
    }
}

namespace {

// One forward+backward pass; returns loss value, analytic grads, and the
// tape's kink proximity.
struct TapeRun {
    double loss = 0.0;
    std::vector<Tensor> grads;  // aligned with store order
    double min_abs_relu_input = 1e300;
};

TapeRun run_tape(const LossBuilder& build_loss, const ParameterStore& params, bool want_grads) {
    Tape tape;
    ParamVars pv = leaf_params(tape, params);
    Var loss = build_loss(tape, pv);
    TapeRun out;
    const Tensor& lv = tape.val(loss);
    if (lv.numel() != 1) throw DimError("finite_diff_check: loss must be scalar");
    out.loss = lv.values[0];
    out.min_abs_relu_input = tape.min_abs_relu_input();
    if (want_grads) {
        tape.backward(loss);
        for (Var v : pv.vars) out.grads.push_back(tape.grad(v));
    }
    return out;
}

}  // namespace

GradCheck finite_diff_check(const LossBuilder& build_loss, const ParameterStore& params,
                            double eps, size_t max_coords_per_tensor, uint64_t seed) {
    TapeRun base = run_tape(build_loss, params, /*want_grads=*/true);
    GradCheck res;
    res.min_abs_relu_input = base.min_abs_relu_input;

    ParameterStore work;
    for (const std::string& name : params.names()) work.add(name, params.at(name));

    Rng rng(seed);
    const std::vector<std::string>& names = params.names();
    for (size_t t = 0; t < names.size(); ++t) {
        Tensor& w = work.at(names[t]);
        std::vector<size_t> coords;
        if (w.numel() <= max_coords_per_tensor) {
            for (size_t i = 0; i < w.numel(); ++i) coords.push_back(i);
        } else {
            for (size_t k = 0; k < max_coords_per_tensor; ++k) coords.push_back(rng.index(w.numel()));
        }
        for (size_t c : coords) {
            const double keep = w.values[c];
            w.values[c] = keep + eps;
            TapeRun plus = run_tape(build_loss, work, /*want_grads=*/false);
            w.values[c] = keep - eps;
            TapeRun minus = run_tape(build_loss, work, /*want_grads=*/false);
            w.values[c] = keep;
            res.min_abs_relu_input =
                std::min({res.min_abs_relu_input, plus.min_abs_relu_input, minus.min_abs_relu_input});
            const double numeric = (plus.loss - minus.loss) / (2.0 * eps);
            const double analytic = base.grads[t].values[c];
            const double rel = std::fabs(analytic - numeric) /
                               std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
            res.max_rel_err = std::max(res.max_rel_err, rel);
            ++res.coords;
        }
    }
    return res;
}

}  // namespace enroll
