#include "monet/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace monet {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

[[noreturn]] void shape_error(const Layer& layer, const Shape& got, const std::string& expected) {
  throw std::invalid_argument(std::string(to_string(layer.kind)) + ": input shape " +
                              shape_to_string(got) + " incompatible with " + expected);
}

Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.data()) v = rng.uniform(-limit, limit);
  return t;
}

struct ConvGeometry {
  std::size_t h, w, c, k, stride, pad, oh, ow;
  std::size_t patch() const { return c * k * k; }
  std::size_t pixels() const { return oh * ow; }
};

ConvGeometry conv_geometry(const Layer& layer, const Tensor& input) {
  if (input.rank() != 3 || input.dim(2) != static_cast<std::size_t>(layer.in_channels))
    shape_error(layer, input.shape(), "[H, W, " + std::to_string(layer.in_channels) + "]");
  ConvGeometry g{};
  g.h = input.dim(0);
  g.w = input.dim(1);
  g.c = input.dim(2);
  g.k = static_cast<std::size_t>(layer.kernel);
  g.stride = static_cast<std::size_t>(layer.stride);
  g.pad = (g.k - 1) / 2;
  g.oh = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.k) / g.stride + 1;
  return g;
}

// Column layout matches the kernel's [inC, k, k] flattening.
RowMat im2col(const ConvGeometry& g, std::span<const double> in) {
  RowMat col = RowMat::Zero(static_cast<Eigen::Index>(g.pixels()),
                            static_cast<Eigen::Index>(g.patch()));
  for (std::size_t oy = 0; oy < g.oh; ++oy) {
    for (std::size_t ox = 0; ox < g.ow; ++ox) {
      double* row = col.data() + (oy * g.ow + ox) * g.patch();
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                        static_cast<std::ptrdiff_t>(g.pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                          static_cast<std::ptrdiff_t>(g.pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
          const double* src = in.data() + (static_cast<std::size_t>(iy) * g.w +
                                            static_cast<std::size_t>(ix)) * g.c;
          for (std::size_t c = 0; c < g.c; ++c) row[c * g.k * g.k + ky * g.k + kx] = src[c];
        }
      }
    }
  }
  return col;
}

void col2im(const ConvGeometry& g, const RowMat& col, std::span<double> out) {
  for (std::size_t oy = 0; oy < g.oh; ++oy) {
    for (std::size_t ox = 0; ox < g.ow; ++ox) {
      const double* row = col.data() + (oy * g.ow + ox) * g.patch();
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                        static_cast<std::ptrdiff_t>(g.pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                          static_cast<std::ptrdiff_t>(g.pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
          double* dst = out.data() + (static_cast<std::size_t>(iy) * g.w +
                                      static_cast<std::size_t>(ix)) * g.c;
          for (std::size_t c = 0; c < g.c; ++c) dst[c] += row[c * g.k * g.k + ky * g.k + kx];
        }
      }
    }
  }
}

Tensor conv_forward(const Layer& layer, const Tensor& input) {
  const auto g = conv_geometry(layer, input);
  const RowMat col = im2col(g, input.data());
  const auto oc = static_cast<Eigen::Index>(layer.out_channels);
  ConstMatMap kernel(layer.weight().data().data(), oc, static_cast<Eigen::Index>(g.patch()));
  ConstVecMap bias(layer.bias().data().data(), oc);
  Tensor out({g.oh, g.ow, static_cast<std::size_t>(oc)});
  MatMap o(out.data().data(), static_cast<Eigen::Index>(g.pixels()), oc);
  o.noalias() = col * kernel.transpose();
  o.rowwise() += bias.transpose();
  return out;
}

LayerGrads conv_backward(const Layer& layer, const Tensor& input, const Tensor& upstream) {
  const auto g = conv_geometry(layer, input);
  const auto oc = static_cast<Eigen::Index>(layer.out_channels);
  if (upstream.shape() != Shape{g.oh, g.ow, static_cast<std::size_t>(oc)})
    shape_error(layer, upstream.shape(), "upstream gradient of output shape");
  const RowMat col = im2col(g, input.data());
  ConstMatMap kernel(layer.weight().data().data(), oc, static_cast<Eigen::Index>(g.patch()));
  ConstMatMap up(upstream.data().data(), static_cast<Eigen::Index>(g.pixels()), oc);

  LayerGrads out;
  out.param_grads.emplace_back(layer.weight().shape());
  out.param_grads.emplace_back(layer.bias().shape());
  MatMap dk(out.param_grads[0].data().data(), oc, static_cast<Eigen::Index>(g.patch()));
  dk.noalias() = up.transpose() * col;
  VecMap(out.param_grads[1].data().data(), oc) = up.colwise().sum().transpose();

  const RowMat dcol = up * kernel;
  out.input_grad = Tensor(input.shape());
  col2im(g, dcol, out.input_grad.data());
  return out;
}

std::size_t dense_rows(const Layer& layer, const Tensor& input) {
  const auto in = static_cast<std::size_t>(layer.in_channels);
  if (input.shape().back() != in)
    shape_error(layer, input.shape(), "[..., " + std::to_string(in) + "]");
  return input.size() / in;
}

Tensor dense_forward(const Layer& layer, const Tensor& input) {
  const auto rows = static_cast<Eigen::Index>(dense_rows(layer, input));
  const auto in = static_cast<Eigen::Index>(layer.in_channels);
  const auto outf = static_cast<Eigen::Index>(layer.out_channels);
  Shape shape = input.shape();
  shape.back() = static_cast<std::size_t>(outf);
  Tensor out(shape);
  ConstMatMap x(input.data().data(), rows, in);
  ConstMatMap w(layer.weight().data().data(), outf, in);
  MatMap y(out.data().data(), rows, outf);
  y.noalias() = x * w.transpose();
  y.rowwise() += ConstVecMap(layer.bias().data().data(), outf).transpose();
  return out;
}

LayerGrads dense_backward(const Layer& layer, const Tensor& input, const Tensor& upstream) {
  const auto rows = static_cast<Eigen::Index>(dense_rows(layer, input));
  const auto in = static_cast<Eigen::Index>(layer.in_channels);
  const auto outf = static_cast<Eigen::Index>(layer.out_channels);
  Shape expected = input.shape();
  expected.back() = static_cast<std::size_t>(outf);
  if (upstream.shape() != expected) shape_error(layer, upstream.shape(), shape_to_string(expected));
  ConstMatMap x(input.data().data(), rows, in);
  ConstMatMap w(layer.weight().data().data(), outf, in);
  ConstMatMap g(upstream.data().data(), rows, outf);

  LayerGrads out;
  out.param_grads.emplace_back(layer.weight().shape());
  out.param_grads.emplace_back(layer.bias().shape());
  MatMap(out.param_grads[0].data().data(), outf, in).noalias() = g.transpose() * x;
  VecMap(out.param_grads[1].data().data(), outf) = g.colwise().sum().transpose();
  out.input_grad = Tensor(input.shape());
  MatMap(out.input_grad.data().data(), rows, in).noalias() = g * w;
  return out;
}

void require_hwc(const Layer& layer, const Tensor& t) {
  if (t.rank() != 3) shape_error(layer, t.shape(), "[H, W, C]");
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::upsample2x: return "upsample2x";
    case LayerKind::concat_channels: return "concat_channels";
  }
  return "unknown";
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Layer Layer::conv2d(int in_channels, int out_channels, int kernel, int stride, Rng& rng) {
  if (in_channels <= 0 || out_channels <= 0 || kernel <= 0 || stride <= 0)
    throw std::invalid_argument("conv2d: invalid hyper-parameters");
  Layer l = of_kind(LayerKind::conv2d);
  l.kernel = kernel;
  l.stride = stride;
  l.in_channels = in_channels;
  l.out_channels = out_channels;
  const auto kk = static_cast<std::size_t>(kernel * kernel);
  l.params.push_back(he_uniform({static_cast<std::size_t>(out_channels),
                                 static_cast<std::size_t>(in_channels),
                                 static_cast<std::size_t>(kernel), static_cast<std::size_t>(kernel)},
                                kk * static_cast<std::size_t>(in_channels), rng));
  l.params.emplace_back(Shape{static_cast<std::size_t>(out_channels)});
  return l;
}

Layer Layer::dense(int in_features, int out_features, Rng& rng) {
  if (in_features <= 0 || out_features <= 0)
    throw std::invalid_argument("dense: invalid hyper-parameters");
  Layer l = of_kind(LayerKind::dense);
  l.in_channels = in_features;
  l.out_channels = out_features;
  l.params.push_back(he_uniform({static_cast<std::size_t>(out_features),
                                 static_cast<std::size_t>(in_features)},
                                static_cast<std::size_t>(in_features), rng));
  l.params.emplace_back(Shape{static_cast<std::size_t>(out_features)});
  return l;
}

void Layer::zero_grad() {
  for (auto& p : params) p.zero_grad();
}

Tensor apply_layer(const Layer& layer, const Tensor& input) {
  switch (layer.kind) {
    case LayerKind::conv2d: return conv_forward(layer, input);
    case LayerKind::dense: return dense_forward(layer, input);
    case LayerKind::relu: {
      Tensor out(input.shape());
      auto src = input.data();
      auto dst = out.data();
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
      return out;
    }
    case LayerKind::sigmoid: {
      Tensor out(input.shape());
      auto src = input.data();
      auto dst = out.data();
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = sigmoid(src[i]);
      return out;
    }
    case LayerKind::upsample2x: {
      require_hwc(layer, input);
      const auto h = input.dim(0), w = input.dim(1), c = input.dim(2);
      Tensor out({2 * h, 2 * w, c});
      for (std::size_t y = 0; y < 2 * h; ++y)
        for (std::size_t x = 0; x < 2 * w; ++x)
          for (std::size_t k = 0; k < c; ++k) out.at(y, x, k) = input.at(y / 2, x / 2, k);
      return out;
    }
    case LayerKind::concat_channels:
      throw std::invalid_argument("concat_channels: requires two inputs");
  }
  throw std::logic_error("unreachable layer kind");
}

Tensor apply_layer(const Layer& layer, const Tensor& a, const Tensor& b) {
  if (layer.kind != LayerKind::concat_channels)
    throw std::invalid_argument(std::string(to_string(layer.kind)) + ": takes one input");
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1))
    throw std::invalid_argument("concat_channels: spatial mismatch between " +
                                shape_to_string(a.shape()) + " and " +
                                shape_to_string(b.shape()));
  const auto h = a.dim(0), w = a.dim(1), ca = a.dim(2), cb = b.dim(2);
  Tensor out({h, w, ca + cb});
  auto dst = out.data();
  auto sa = a.data();
  auto sb = b.data();
  for (std::size_t p = 0; p < h * w; ++p) {
    std::copy_n(sa.data() + p * ca, ca, dst.data() + p * (ca + cb));
    std::copy_n(sb.data() + p * cb, cb, dst.data() + p * (ca + cb) + ca);
  }
  return out;
}

LayerGrads backprop(const Layer& layer, const Tensor& input, const Tensor& upstream) {
  switch (layer.kind) {
    case LayerKind::conv2d: return conv_backward(layer, input, upstream);
    case LayerKind::dense: return dense_backward(layer, input, upstream);
    case LayerKind::relu:
    case LayerKind::sigmoid: {
      if (upstream.shape() != input.shape())
        shape_error(layer, upstream.shape(), "upstream " + shape_to_string(input.shape()));
      LayerGrads out;
      out.input_grad = Tensor(input.shape());
      auto x = input.data();
      auto g = upstream.data();
      auto d = out.input_grad.data();
      if (layer.kind == LayerKind::relu) {
        for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] > 0.0 ? g[i] : 0.0;
      } else {
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double s = sigmoid(x[i]);
          d[i] = g[i] * s * (1.0 - s);
        }
      }
      return out;
    }
    case LayerKind::upsample2x: {
      require_hwc(layer, input);
      const auto h = input.dim(0), w = input.dim(1), c = input.dim(2);
      if (upstream.shape() != Shape{2 * h, 2 * w, c})
        shape_error(layer, upstream.shape(), "upstream [2H, 2W, C]");
      LayerGrads out;
      out.input_grad = Tensor(input.shape());
      for (std::size_t y = 0; y < 2 * h; ++y)
        for (std::size_t x = 0; x < 2 * w; ++x)
          for (std::size_t k = 0; k < c; ++k)
            out.input_grad.at(y / 2, x / 2, k) += upstream.at(y, x, k);
      return out;
    }
    case LayerKind::concat_channels:
      throw std::invalid_argument("concat_channels: use backprop_concat");
  }
  throw std::logic_error("unreachable layer kind");
}

std::pair<Tensor, Tensor> backprop_concat(const Tensor& a, const Tensor& b,
                                          const Tensor& upstream) {
  const auto ca = a.dim(2);
  const auto cb = b.dim(2);
  if (upstream.shape() != Shape{a.dim(0), a.dim(1), ca + cb})
    throw std::invalid_argument("concat_channels: upstream shape " +
                                shape_to_string(upstream.shape()) + " mismatches inputs");
  return {slice_channels(upstream, 0, ca), slice_channels(upstream, ca, cb)};
}

void accumulate(Layer& layer, const LayerGrads& grads) {
  for (std::size_t i = 0; i < layer.params.size(); ++i) {
    auto dst = layer.params[i].grad();
    auto src = grads.param_grads.at(i).data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
}

Tensor multiply(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("multiply: shape mismatch " + shape_to_string(a.shape()) +
                                " vs " + shape_to_string(b.shape()));
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("add: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor slice_channels(const Tensor& t, std::size_t c0, std::size_t count) {
  if (t.rank() != 3 || c0 + count > t.dim(2))
    throw std::invalid_argument("slice_channels: out of range on " + shape_to_string(t.shape()));
  const auto h = t.dim(0), w = t.dim(1), c = t.dim(2);
  Tensor out({h, w, count});
  auto src = t.data();
  auto dst = out.data();
  for (std::size_t p = 0; p < h * w; ++p)
    std::copy_n(src.data() + p * c + c0, count, dst.data() + p * count);
  return out;
}

}  // namespace monet
