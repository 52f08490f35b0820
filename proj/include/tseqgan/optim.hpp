#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tseqgan/tape.hpp"

namespace tseqgan::diff {

/// Non-owning list of named trainable tensors, in a fixed order.
using ParamRefs = std::vector<std::pair<std::string, Tensor*>>;
using ConstParamRefs = std::vector<std::pair<std::string, const Tensor*>>;

/// p <- p - lr * g for every parameter that has a gradient.
/// Throws NumericError (parameters untouched) if any gradient is non-finite,
/// DimensionError on a shape mismatch.
void sgd_step(const ParamRefs& params, const GradientMap& grads, double lr);

/// Global L2 norm of all gradients.
double global_norm(const GradientMap& grads);

/// Rescales gradients so that their global norm is at most max_norm.
/// Returns the norm before clipping.
double clip_global_norm(GradientMap& grads, double max_norm);

}  // namespace tseqgan::diff
