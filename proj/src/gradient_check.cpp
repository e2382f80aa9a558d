#include "monet/gradient_check.hpp"

#include <algorithm>
#include <cmath>

namespace monet {

bool GradientCheckReport::passed() const {
  return std::none_of(blocks.begin(), blocks.end(), [](const auto& b) { return b.flagged; });
}

double GradientCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& b : blocks) worst = std::max(worst, b.max_rel_error);
  return worst;
}

std::size_t GradientCheckReport::checked() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.checked;
  return n;
}

std::size_t GradientCheckReport::nonsmooth() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.nonsmooth;
  return n;
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

GradientCheckReport compare_with_finite_differences(const std::vector<CheckedBlock>& blocks,
                                                    const std::function<double()>& loss,
                                                    double tolerance, double h,
                                                    bool skip_nonsmooth) {
  GradientCheckReport report;
  report.tolerance = tolerance;
  auto central = [&](std::span<double> values, std::size_t i, double step) {
    const double saved = values[i];
    values[i] = saved + step;
    const double up = loss();
    values[i] = saved - step;
    const double down = loss();
    values[i] = saved;
    return (up - down) / (2.0 * step);
  };
  for (const auto& block : blocks) {
    GradientBlockReport r{block.name};
    for (std::size_t i = 0; i < block.values.size(); ++i) {
      const double numeric = central(block.values, i, h);
      const double err = relative_error(block.analytic[i], numeric);
      if (skip_nonsmooth && err > tolerance) {
        const double fine = central(block.values, i, h / 10.0);
        if (relative_error(numeric, fine) > tolerance) {
          ++r.nonsmooth;
          continue;
        }
      }
      ++r.checked;
      r.max_rel_error = std::max(r.max_rel_error, err);
    }
    r.flagged = !(r.max_rel_error <= tolerance);
    report.blocks.push_back(std::move(r));
  }
  return report;
}

GradientCheckReport gradient_check(std::vector<Layer>& fragment, Tensor input, double tolerance,
                                   std::uint64_t head_seed) {
  auto forward_all = [&](std::vector<Tensor>* activations) {
    Tensor x = input;
    for (const auto& layer : fragment) {
      if (activations) activations->push_back(x);
      x = apply_layer(layer, x);
    }
    return x;
  };

  const Tensor probe = forward_all(nullptr);
  std::vector<double> head(probe.size());
  Rng rng(head_seed);
  for (auto& c : head) c = rng.uniform(-1.0, 1.0);
  auto loss = [&] {
    const Tensor y = forward_all(nullptr);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += head[i] * y[i];
    return s;
  };

  std::vector<Tensor> activations;
  const Tensor y = forward_all(&activations);
  Tensor upstream(y.shape(), head);
  std::vector<LayerGrads> grads(fragment.size());
  for (std::size_t i = fragment.size(); i-- > 0;) {
    grads[i] = backprop(fragment[i], activations[i], upstream);
    upstream = grads[i].input_grad;
  }

  std::vector<CheckedBlock> blocks;
  blocks.push_back({"input", input.data(), upstream.data()});
  for (std::size_t i = 0; i < fragment.size(); ++i)
    for (std::size_t j = 0; j < fragment[i].params.size(); ++j)
      blocks.push_back({std::to_string(i) + "." + std::string(to_string(fragment[i].kind)) +
                            ".p" + std::to_string(j),
                        fragment[i].params[j].data(), grads[i].param_grads[j].data()});
  return compare_with_finite_differences(blocks, loss, tolerance);
}

}  // namespace monet
