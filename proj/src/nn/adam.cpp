#include "splitface/nn/adam.hpp"

#include <cmath>

namespace splitface::nn {

template <typename T>
void adam_step(const std::vector<Parameter<T>*>& params, AdamState<T>& state) {
  ++state.step;
  const auto& cfg = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto* p : params) {
    auto [mit, m_new] = state.first_moment.try_emplace(p->name, p->value.shape());
    auto [vit, v_new] = state.second_moment.try_emplace(p->name, p->value.shape());
    auto& m = mit->second;
    auto& v = vit->second;
    m.require_same_shape(p->value, "adam_step first moment");
    v.require_same_shape(p->value, "adam_step second moment");
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / correction1;
      const double v_hat = vi / correction2;
      p->value[i] = static_cast<T>(p->value[i] - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
    }
  }
}

template void adam_step(const std::vector<Parameter<float>*>&, AdamState<float>&);
template void adam_step(const std::vector<Parameter<double>*>&, AdamState<double>&);

}  // namespace splitface::nn
