#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "monet/tensor.hpp"

namespace monet {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment estimates for one list of parameter tensors.
struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// Bias-corrected Adam update of a single parameter block. `block` indexes the
/// moment arrays in `state`; the caller advances `state.step` once per step
/// across all blocks (see AdamOptimizer). Throws on non-finite gradients.
void adam_update(AdamState& state, std::size_t block, std::span<double> params,
                 std::span<const double> grads);

/// Adam over a fixed set of tensors, reading each tensor's grad buffer.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor*> params, AdamOptions options);

  /// One update of every tensor; leaves gradients untouched.
  void step();
  void zero_grad();

  const AdamState& state() const { return state_; }
  /// Adopts saved moments and step count; options stay as constructed.
  void restore(const AdamState& saved);
  std::uint64_t steps() const { return state_.step; }

 private:
  std::vector<Tensor*> params_;
  AdamState state_;
};

}  // namespace monet
