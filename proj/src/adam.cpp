#include "monet/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace monet {

void adam_update(AdamState& state, std::size_t block, std::span<double> params,
                 std::span<const double> grads) {
  if (state.step == 0) throw std::logic_error("adam_update: step counter must be advanced first");
  auto& m = state.m.at(block);
  auto& v = state.v.at(block);
  if (params.size() != grads.size() || m.size() != params.size())
    throw std::invalid_argument("adam_update: size mismatch in block " + std::to_string(block));
  for (double g : grads)
    if (!std::isfinite(g))
      throw std::runtime_error("adam_update: non-finite gradient in block " +
                               std::to_string(block));

  const auto& o = state.options;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * grads[i];
    v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * grads[i] * grads[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    params[i] -= o.lr * m_hat / (std::sqrt(v_hat) + o.eps);
  }
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor*> params, AdamOptions options)
    : params_(std::move(params)) {
  if (!(options.lr >= 0.0)) throw std::invalid_argument("adam: learning rate must be >= 0");
  state_.options = options;
  for (const auto* p : params_) {
    state_.m.emplace_back(p->size(), 0.0);
    state_.v.emplace_back(p->size(), 0.0);
  }
}

void AdamOptimizer::step() {
  // Validate everything before touching any parameter.
  for (std::size_t b = 0; b < params_.size(); ++b)
    for (double g : params_[b]->grad())
      if (!std::isfinite(g))
        throw std::runtime_error("adam: non-finite gradient in block " + std::to_string(b));
  ++state_.step;
  for (std::size_t b = 0; b < params_.size(); ++b)
    adam_update(state_, b, params_[b]->data(), params_[b]->grad());
}

void AdamOptimizer::restore(const AdamState& saved) {
  if (saved.m.size() != params_.size() || saved.v.size() != params_.size())
    throw std::invalid_argument("adam: saved state has " + std::to_string(saved.m.size()) +
                                " blocks, optimizer has " + std::to_string(params_.size()));
  for (std::size_t b = 0; b < params_.size(); ++b)
    if (saved.m[b].size() != params_[b]->size() || saved.v[b].size() != params_[b]->size())
      throw std::invalid_argument("adam: saved state size mismatch in block " + std::to_string(b));
  state_.step = saved.step;
  state_.m = saved.m;
  state_.v = saved.v;
}

void AdamOptimizer::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

}  // namespace monet
