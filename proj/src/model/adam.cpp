#include "rssiloc/model/adam.hpp"

#include <cmath>

#include "rssiloc/error.hpp"

namespace rssiloc::model {

AdamState AdamState::zeros_like(const std::vector<Tensor*>& params) {
  AdamState s;
  for (const auto* p : params) {
    s.m.emplace_back(p->size(), 0.0);
    s.v.emplace_back(p->size(), 0.0);
  }
  return s;
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamHyper& hyper, std::int64_t t) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw Error(Errc::ShapeMismatch, "adam: parameter, gradient and state counts differ");
  }
  if (t < 1) throw Error(Errc::InvalidConfig, "adam step number must be >= 1");
  const double correction1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k]->data;
    const auto& g = grads[k].data;
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (g.size() != p.size()) throw Error(Errc::ShapeMismatch, "adam: gradient shape for " + params[k]->name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
    }
  }
}

}  // namespace rssiloc::model
