#include "tseqgan/optim.hpp"

#include <cmath>

#include "tseqgan/error.hpp"

namespace tseqgan::diff {

void sgd_step(const ParamRefs& params, const GradientMap& grads, double lr) {
  if (!(lr > 0.0)) throw ContractError("sgd_step: learning rate must be positive");
  // Validate everything before touching any parameter.
  for (const auto& [name, tensor] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    if (it->second.size() != tensor->size()) {
      throw DimensionError("sgd_step: gradient for " + name + " has shape " + it->second.shape_string() +
                           ", parameter " + tensor->shape_string());
    }
    if (!it->second.all_finite()) throw NumericError("sgd_step: non-finite gradient for " + name);
  }
  for (const auto& [name, tensor] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    const Tensor& g = it->second;
    for (std::size_t i = 0; i < g.size(); ++i) (*tensor)[i] -= lr * g[i];
  }
}

double global_norm(const GradientMap& grads) {
  double s = 0.0;
  for (const auto& [name, g] : grads) {
    for (double x : g.values()) s += x * x;
  }
  return std::sqrt(s);
}

double clip_global_norm(GradientMap& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (std::isfinite(norm) && norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (auto& [name, g] : grads) {
      for (double& x : g.values()) x *= f;
    }
  }
  return norm;
}

}  // namespace tseqgan::diff
