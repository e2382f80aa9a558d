#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "monet/layers.hpp"

namespace monet {

struct GradientBlockReport {
  std::string name;
  double max_rel_error = 0.0;
  bool flagged = false;
  std::size_t checked = 0;
  std::size_t nonsmooth = 0;  // skipped: estimates at h and h/10 disagree
};

struct GradientCheckReport {
  double tolerance = 0.0;
  std::vector<GradientBlockReport> blocks;

  bool passed() const;
  double max_rel_error() const;
  std::size_t checked() const;
  std::size_t nonsmooth() const;
};

/// A block of values whose analytic gradient is checked.
struct CheckedBlock {
  std::string name;
  std::span<double> values;
  std::span<const double> analytic;
};

/// |a - n| / max(|a|, |n|, 1e-6)
double relative_error(double analytic, double numeric);

/// Central differences (step h) of `loss` against the analytic gradients held
/// in each block. `loss` must re-evaluate from the current block values.
/// With `skip_nonsmooth`, an element that fails is re-estimated at h/10; if the
/// two estimates disagree a ReLU kink lies within the step, and the element is
/// counted as nonsmooth instead of checked.
GradientCheckReport compare_with_finite_differences(const std::vector<CheckedBlock>& blocks,
                                                    const std::function<double()>& loss,
                                                    double tolerance, double h = 1e-5,
                                                    bool skip_nonsmooth = false);

/// Checks a sequential stack of layers with a fixed random linear loss head
/// (sum_i c_i * y_i). Blocks are "input" followed by "<i>.<kind>.p<j>".
GradientCheckReport gradient_check(std::vector<Layer>& fragment, Tensor input, double tolerance,
                                   std::uint64_t head_seed = 1);

}  // namespace monet
