#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "enroll/tape.h"
#include "enroll/tensor.h"

namespace enroll {

// Plain (tape-free) forward ops, used by evaluation paths and as the forward
// halves the gradient checker perturbs.
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor softmax(const Tensor& x);
double cross_entropy(const Tensor& pred, size_t gold);

// In-place SGD with L2: w <- w - lr*(g + l2*w). params and grads must hold
// the same names with the same shapes.
void sgd_step(ParameterStore& params, const ParameterStore& grads, double lr, double l2);

// Leaf Vars for every entry of a ParameterStore, in store order.
struct ParamVars {
    std::vector<std::string> names;
    std::vector<Var> vars;

    Var at(const std::string& name) const;
};

ParamVars leaf_params(Tape& tape, const ParameterStore& params);

// Adds scale * (tape gradient of each parameter leaf) into `into`, which must
// hold the same names/shapes. Used to mean gradients over a batch.
void accumulate_grads(ParameterStore& into, const Tape& tape, const ParamVars& pv, double scale);

// Central-difference gradient check of a tape-built loss against the tape's
// own gradients.
struct GradCheck {
    double max_rel_err = 0.0;
    size_t coords = 0;
    // Smallest |relu input| seen across every forward pass. A value close to
    // eps means some draw sat on a kink and the check should be redrawn.
    double min_abs_relu_input = 1e300;
};

using LossBuilder = std::function<Var(Tape&, const ParamVars&)>;

// Relative error is |analytic - numeric| / max(1, |analytic|, |numeric|),
// maximized over up to max_coords_per_tensor seeded coordinate samples of
// each parameter tensor.
GradCheck finite_diff_check(const LossBuilder& build_loss, const ParameterStore& params,
                            double eps, size_t max_coords_per_tensor, uint64_t seed);

}  // namespace enroll
