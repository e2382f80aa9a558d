#include "monet/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace monet {

namespace {

Tensor relu(const Tensor& t) { return apply_layer(Layer::relu(), t); }

Tensor relu_backward(const Tensor& pre, const Tensor& upstream) {
  return backprop(Layer::relu(), pre, upstream).input_grad;
}

Tensor upsample(const Tensor& t) { return apply_layer(Layer::upsample2x(), t); }

// Adjoint of nearest-neighbour upsampling.
Tensor upsample_backward(const Tensor& upstream) {
  Tensor coarse({upstream.dim(0) / 2, upstream.dim(1) / 2, upstream.dim(2)});
  return backprop(Layer::upsample2x(), coarse, upstream).input_grad;
}

Rng layer_rng(std::uint64_t seed, const std::string& path) { return Rng(seed).fork(path); }

Layer make_conv(std::uint64_t seed, const std::string& path, int in, int out, int k, int stride) {
  Rng rng = layer_rng(seed, path);
  return Layer::conv2d(in, out, k, stride, rng);
}

void add_into(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

constexpr double kNormEps = 1e-8;

/// f / sqrt(|f|^2 + eps); returns the denominator.
double normalize(std::span<const double> f, std::span<double> out) {
  double sq = kNormEps;
  for (double v : f) sq += v * v;
  const double r = std::sqrt(sq);
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i] / r;
  return r;
}

/// Adds the gradient w.r.t. f given dL/d(normalized f).
void normalize_backward(std::span<const double> unit, double r, std::span<const double> g,
                        std::span<double> df) {
  double dot = 0.0;
  for (std::size_t i = 0; i < unit.size(); ++i) dot += unit[i] * g[i];
  for (std::size_t i = 0; i < unit.size(); ++i) df[i] += (g[i] - unit[i] * dot) / r;
}

}  // namespace

std::string_view to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::full: return "full";
    case AblationMode::no_gating: return "no_gating";
    case AblationMode::dot_product: return "dot_product";
  }
  return "unknown";
}

AblationMode ablation_from_string(std::string_view name) {
  if (name == "full") return AblationMode::full;
  if (name == "no_gating") return AblationMode::no_gating;
  if (name == "dot_product") return AblationMode::dot_product;
  throw std::invalid_argument("unknown ablation mode '" + std::string(name) +
                              "' (expected full, no_gating or dot_product)");
}

void ModelConfig::validate() const {
  scales.validate();
  if (detector_hidden < 1) throw std::invalid_argument("detector_hidden must be >= 1");
  if (decoder_channels < 1) throw std::invalid_argument("decoder_channels must be >= 1");
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
  j = nlohmann::json{{"scales", cfg.scales},
                     {"detector_hidden", cfg.detector_hidden},
                     {"decoder_channels", cfg.decoder_channels},
                     {"mode", std::string(to_string(cfg.mode))},
                     {"init_seed", cfg.init_seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
  cfg.scales = j.at("scales").get<ScaleConfig>();
  cfg.detector_hidden = j.value("detector_hidden", 64);
  cfg.decoder_channels = j.value("decoder_channels", 8);
  cfg.mode = ablation_from_string(j.value("mode", std::string("full")));
  cfg.init_seed = j.value("init_seed", std::uint64_t{0});
  cfg.validate();
}

// ---------------------------------------------------------------------------
// Encoder

Encoder::Encoder(const ScaleConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg.validate();
  for (int s = 1; s <= cfg.top_scale; ++s) {
    const std::string base = "encoder.scale" + std::to_string(s);
    convs_.push_back(make_conv(seed, base + ".conv1", cfg.channels(s - 1), cfg.channels(s), 2, 2));
    convs_.push_back(make_conv(seed, base + ".conv2", cfg.channels(s), cfg.channels(s), 1, 1));
  }
}

FeatureMaps Encoder::forward(const Tensor& image, Cache* cache) const {
  const auto n = static_cast<std::size_t>(cfg_.image_size);
  if (image.shape() != Shape{n, n, 3})
    throw std::invalid_argument("encode: expected image of shape " +
                                shape_to_string({n, n, 3}) + ", got " +
                                shape_to_string(image.shape()));
  if (cache) cache->clear();
  FeatureMaps out;
  Tensor x = image;
  for (int s = 1; s <= cfg_.top_scale; ++s) {
    const auto& c1 = convs_[static_cast<std::size_t>(2 * (s - 1))];
    const auto& c2 = convs_[static_cast<std::size_t>(2 * (s - 1) + 1)];
    Tensor pre1 = apply_layer(c1, x);
    Tensor act1 = relu(pre1);
    Tensor pre2 = apply_layer(c2, act1);
    Tensor f = relu(pre2);
    if (cache) cache->push_back({std::move(x), std::move(pre1), std::move(act1), std::move(pre2)});
    out[s] = f;
    x = std::move(f);
  }
  return out;
}

void Encoder::backward(const Cache& cache, const FeatureMaps& feature_grads) {
  if (cache.size() != static_cast<std::size_t>(cfg_.top_scale))
    throw std::invalid_argument("encoder backward: cache does not match config");
  Tensor carried;
  for (int s = cfg_.top_scale; s >= 1; --s) {
    const auto& bc = cache[static_cast<std::size_t>(s - 1)];
    Tensor d = carried.empty() ? Tensor(bc.pre2.shape()) : std::move(carried);
    if (auto it = feature_grads.find(s); it != feature_grads.end()) add_into(d.data(), it->second.data());
    auto& c1 = convs_[static_cast<std::size_t>(2 * (s - 1))];
    auto& c2 = convs_[static_cast<std::size_t>(2 * (s - 1) + 1)];
    auto g2 = backprop(c2, bc.act1, relu_backward(bc.pre2, d));
    accumulate(c2, g2);
    auto g1 = backprop(c1, bc.input, relu_backward(bc.pre1, g2.input_grad));
    accumulate(c1, g1);
    if (s > 1) carried = std::move(g1.input_grad);
  }
}

FeatureMaps encode(const Model& model, const Tensor& image) { return model.encoder().forward(image); }

// ---------------------------------------------------------------------------
// Overlap detector

OverlapDetector::OverlapDetector(int channels, int hidden, bool dot_product, std::uint64_t seed)
    : channels_(channels), hidden_(hidden), dot_(dot_product) {
  if (channels < 1 || (!dot_product && hidden < 1)) throw std::invalid_argument("detector: invalid dimensions");
  if (!dot_) {
    Rng r1 = Rng(seed).fork("hidden");
    Rng r2 = Rng(seed).fork("output");
    hidden_layer_ = Layer::dense(2 * channels, hidden, r1);
    // Mirrored rows [A, -A] / [-A, A]: the initial hidden layer sees only
    // f1 - f2, so training starts from a symmetric difference detector.
    auto w = hidden_layer_.weight().data();
    const auto c = static_cast<std::size_t>(channels);
    const auto half = static_cast<std::size_t>(hidden) / 2;
    for (std::size_t j = 0; j < half; ++j) {
      double* row = w.data() + j * 2 * c;
      double* twin = w.data() + (j + half) * 2 * c;
      for (std::size_t i = 0; i < c; ++i) {
        row[c + i] = -row[i];
        twin[i] = -row[i];
        twin[c + i] = row[i];
      }
    }
    output_layer_ = Layer::dense(hidden, 1, r2);
    // Zero output weights: every pair starts at 0.5, away from sigmoid saturation.
    output_layer_.weight().fill(0.0);
  }
}

void OverlapDetector::check(std::span<const double> f1, std::span<const double> f2) const {
  const auto c = static_cast<std::size_t>(channels_);
  if (f1.size() != c || f2.size() != c)
    throw std::invalid_argument("detect_overlap: feature lengths " + std::to_string(f1.size()) +
                                " and " + std::to_string(f2.size()) + ", expected " +
                                std::to_string(c));
}

void OverlapDetector::project(std::span<const double> f, int side, std::span<double> out) const {
  const auto c = static_cast<std::size_t>(channels_);
  std::vector<double> unit(c);
  normalize(f, unit);
  const auto w = hidden_layer_.weight().data();
  const std::size_t offset = side == 0 ? 0 : c;
  for (std::size_t j = 0; j < static_cast<std::size_t>(hidden_); ++j) {
    const double* row = w.data() + j * 2 * c + offset;
    double acc = 0.0;
    for (std::size_t i = 0; i < c; ++i) acc += row[i] * unit[i];
    out[j] = acc;
  }
}

std::vector<double> OverlapDetector::project_map(const Tensor& features, int side) const {
  const auto c = static_cast<std::size_t>(channels_);
  const std::size_t cells = features.size() / c;
  const auto h = static_cast<std::size_t>(hidden_);
  std::vector<double> out(cells * h);
  for (std::size_t p = 0; p < cells; ++p)
    project(features.data().subspan(p * c, c), side, std::span(out).subspan(p * h, h));
  return out;
}

double OverlapDetector::score_projected(std::span<const double> a,
                                        std::span<const double> b) const {
  const auto b1 = hidden_layer_.bias().data();
  const auto w2 = output_layer_.weight().data();
  double z = 0.0;
  for (std::size_t j = 0; j < static_cast<std::size_t>(hidden_); ++j) {
    const double h = (a[j] + b[j]) + b1[j];
    if (h > 0.0) z += w2[j] * h;
  }
  return sigmoid(z + output_layer_.bias()[0]);
}

double OverlapDetector::score(std::span<const double> f1, std::span<const double> f2) const {
  check(f1, f2);
  if (dot_) {
    std::vector<double> u1(f1.size()), u2(f2.size());
    normalize(f1, u1);
    normalize(f2, u2);
    double z = 0.0;
    for (std::size_t i = 0; i < u1.size(); ++i) z += u1[i] * u2[i];
    return sigmoid(z);
  }
  std::vector<double> a(static_cast<std::size_t>(hidden_)), b(a.size());
  project(f1, 0, a);
  project(f2, 1, b);
  return score_projected(a, b);
}

void OverlapDetector::backward(std::span<const double> f1, std::span<const double> f2,
                               double dscore, std::span<double> df1, std::span<double> df2) {
  check(f1, f2);
  const auto c = f1.size();
  std::vector<double> u1(c), u2(c), g1(c, 0.0), g2(c, 0.0);
  const double r1 = normalize(f1, u1);
  const double r2 = normalize(f2, u2);
  if (dot_) {
    double z = 0.0;
    for (std::size_t i = 0; i < c; ++i) z += u1[i] * u2[i];
    const double s = sigmoid(z);
    const double dz = dscore * s * (1.0 - s);
    for (std::size_t i = 0; i < c; ++i) {
      g1[i] = dz * u2[i];
      g2[i] = dz * u1[i];
    }
  } else {
    const auto h = static_cast<std::size_t>(hidden_);
    std::vector<double> a(h), b(h);
    project(f1, 0, a);
    project(f2, 1, b);
    const auto b1 = hidden_layer_.bias().data();
    const auto w1 = hidden_layer_.weight().data();
    const auto w2 = output_layer_.weight().data();
    std::vector<double> act(h);
    double z = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
      const double pre = (a[j] + b[j]) + b1[j];
      act[j] = pre > 0.0 ? pre : 0.0;
      if (pre > 0.0) z += w2[j] * pre;
    }
    const double s = sigmoid(z + output_layer_.bias()[0]);
    const double dz = dscore * s * (1.0 - s);

    auto gw2 = output_layer_.weight().grad();
    auto gw1 = hidden_layer_.weight().grad();
    auto gb1 = hidden_layer_.bias().grad();
    output_layer_.bias().grad()[0] += dz;
    for (std::size_t j = 0; j < h; ++j) {
      gw2[j] += dz * act[j];
      if (act[j] <= 0.0) continue;
      const double dh = dz * w2[j];
      gb1[j] += dh;
      double* grow = gw1.data() + j * 2 * c;
      const double* wrow = w1.data() + j * 2 * c;
      for (std::size_t i = 0; i < c; ++i) {
        grow[i] += dh * u1[i];
        grow[c + i] += dh * u2[i];
        g1[i] += dh * wrow[i];
        g2[i] += dh * wrow[c + i];
      }
    }
  }
  normalize_backward(u1, r1, g1, df1);
  normalize_backward(u2, r2, g2, df2);
}

double detect_overlap(const OverlapDetector& detector, std::span<const double> f1,
                      std::span<const double> f2) {
  return detector.score(f1, f2);
}

// ---------------------------------------------------------------------------
// Score maps

Tensor OverlapScoreMap::as_tensor() const {
  const auto g = static_cast<std::size_t>(grid);
  Tensor t({g, g, 2});
  for (std::size_t p = 0; p < g * g; ++p) {
    t[2 * p] = o1[p];
    t[2 * p + 1] = o2[p];
  }
  return t;
}

OverlapScoreMap reduce_max(const CandidateSet& candidates, std::span<const double> scores,
                           const OverlapScoreMap* frozen) {
  if (scores.size() != candidates.pairs.size())
    throw std::invalid_argument("reduce_max: one score per candidate required");
  const auto cells = static_cast<std::size_t>(candidates.grid) * static_cast<std::size_t>(candidates.grid);
  OverlapScoreMap map;
  map.scale = candidates.scale;
  map.grid = candidates.grid;
  map.o1.assign(cells, 0.0);
  map.o2.assign(cells, 0.0);
  map.partner1.assign(cells, -1);
  map.partner2.assign(cells, -1);
  map.best1.assign(cells, -1);
  map.best2.assign(cells, -1);

  if (frozen) {
    auto route = [&](const std::vector<int>& best, std::vector<double>& o, std::vector<int>& partner,
                     std::vector<int>& mine, bool first) {
      for (std::size_t p = 0; p < cells; ++p) {
        const int k = best.at(p);
        mine[p] = k;
        if (k < 0) continue;
        o[p] = scores[static_cast<std::size_t>(k)];
        const auto& pr = candidates.pairs.at(static_cast<std::size_t>(k));
        partner[p] = first ? pr.p2 : pr.p1;
      }
    };
    route(frozen->best1, map.o1, map.partner1, map.best1, true);
    route(frozen->best2, map.o2, map.partner2, map.best2, false);
    return map;
  }

  auto better = [](double s, int partner, double best_s, int best_partner) {
    if (best_partner < 0) return true;
    if (s != best_s) return s > best_s;
    return partner < best_partner;
  };
  for (std::size_t k = 0; k < candidates.pairs.size(); ++k) {
    const auto u1 = static_cast<std::size_t>(candidates.pairs[k].p1);
    const auto u2 = static_cast<std::size_t>(candidates.pairs[k].p2);
    const double s = scores[k];
    if (better(s, candidates.pairs[k].p2, map.o1[u1], map.partner1[u1])) {
      map.o1[u1] = s;
      map.partner1[u1] = candidates.pairs[k].p2;
      map.best1[u1] = static_cast<int>(k);
    }
    if (better(s, candidates.pairs[k].p1, map.o2[u2], map.partner2[u2])) {
      map.o2[u2] = s;
      map.partner2[u2] = candidates.pairs[k].p1;
      map.best2[u2] = static_cast<int>(k);
    }
  }
  return map;
}

OverlapScoreMap build_score_maps(const OverlapDetector& detector, const Tensor& f1,
                                 const Tensor& f2, const CandidateSet& candidates,
                                 ComparisonLedger* ledger, const OverlapScoreMap* frozen,
                                 std::vector<double>* pair_scores) {
  const int g = candidates.grid;
  const auto cells = static_cast<std::size_t>(g) * static_cast<std::size_t>(g);
  const auto c = static_cast<std::size_t>(detector.channels());
  const Shape expected{static_cast<std::size_t>(g), static_cast<std::size_t>(g), c};
  if (f1.shape() != expected || f2.shape() != expected)
    throw std::invalid_argument("build_score_maps: feature maps " + shape_to_string(f1.shape()) +
                                " / " + shape_to_string(f2.shape()) + " do not match " +
                                shape_to_string(expected));

  std::vector<double> proj1, proj2;
  const auto h = static_cast<std::size_t>(detector.hidden_units());
  if (!detector.dot_product()) {
    proj1 = detector.project_map(f1, 0);
    proj2 = detector.project_map(f2, 1);
  }
  std::vector<double> scores(candidates.pairs.size());
  for (std::size_t k = 0; k < candidates.pairs.size(); ++k) {
    const auto [p1, p2] = candidates.pairs[k];
    if (p1 < 0 || p2 < 0 || static_cast<std::size_t>(p1) >= cells ||
        static_cast<std::size_t>(p2) >= cells)
      throw std::out_of_range("build_score_maps: candidate outside the grid");
    const auto u1 = static_cast<std::size_t>(p1);
    const auto u2 = static_cast<std::size_t>(p2);
    scores[k] = detector.dot_product()
                    ? detector.score(f1.data().subspan(u1 * c, c), f2.data().subspan(u2 * c, c))
                    : detector.score_projected(std::span(proj1).subspan(u1 * h, h),
                                               std::span(proj2).subspan(u2 * h, h));
  }
  if (ledger) ledger->record(candidates.scale, candidates.pairs.size());
  OverlapScoreMap map = reduce_max(candidates, scores, frozen);
  if (pair_scores) *pair_scores = std::move(scores);
  return map;
}

// ---------------------------------------------------------------------------
// Gated fusion

FuseResult gated_fuse(const Layer* gate, const Tensor& prev_up, const Tensor& current) {
  if (prev_up.rank() != 3 || current.rank() != 3 || prev_up.dim(0) != current.dim(0) ||
      prev_up.dim(1) != current.dim(1))
    throw std::invalid_argument("gated_fuse: spatial mismatch between " +
                                shape_to_string(prev_up.shape()) + " and " +
                                shape_to_string(current.shape()));
  const Layer concat = Layer::concat_channels();
  FuseResult r;
  if (!gate) {
    r.fused = apply_layer(concat, prev_up, current);
    return r;
  }
  r.gate_pre = apply_layer(*gate, prev_up);
  r.gate = apply_layer(Layer::sigmoid(), r.gate_pre);
  r.fused = apply_layer(concat, prev_up, multiply(r.gate, current));
  return r;
}

FuseGrads gated_fuse_backward(const Layer* gate, const Tensor& prev_up, const Tensor& current,
                              const FuseResult& forward, const Tensor& upstream) {
  FuseGrads out;
  auto [d_prev, d_second] = backprop_concat(prev_up, current, upstream);
  if (!gate) {
    out.prev_up = std::move(d_prev);
    out.current = std::move(d_second);
    return out;
  }
  out.current = multiply(d_second, forward.gate);
  const Tensor d_gate = multiply(d_second, current);
  const Tensor d_gate_pre = backprop(Layer::sigmoid(), forward.gate_pre, d_gate).input_grad;
  out.gate = backprop(*gate, prev_up, d_gate_pre);
  out.prev_up = add(d_prev, out.gate->input_grad);
  return out;
}

// ---------------------------------------------------------------------------
// Decoder

Decoder::Decoder(const ScaleConfig& cfg, int channels, bool gating, std::uint64_t seed)
    : cfg_(cfg), gating_(gating) {
  top_ = make_conv(seed, "decoder.top", 2, channels, 3, 1);
  for (int s = cfg.top_scale - 1; s >= cfg.min_scale; --s) {
    const std::string base = "decoder.scale" + std::to_string(s);
    blocks_.push_back({make_conv(seed, base + ".up", channels, channels, 3, 1),
                       make_conv(seed, base + ".gate", channels, 2, 1, 1),
                       make_conv(seed, base + ".mix", channels + 2, channels, 3, 1)});
  }
  for (int i = 0; i < cfg.min_scale; ++i) {
    const bool last = i + 1 == cfg.min_scale;
    final_.push_back(make_conv(seed, "decoder.final" + std::to_string(i), channels,
                               last ? 2 : channels, 3, 1));
  }
}

std::pair<Tensor, Tensor> Decoder::forward(const std::map<int, Tensor>& score_maps,
                                           Cache* cache) const {
  auto map_at = [&](int s) -> const Tensor& {
    auto it = score_maps.find(s);
    if (it == score_maps.end())
      throw std::invalid_argument("decode: missing score map for scale " + std::to_string(s));
    const auto g = static_cast<std::size_t>(cfg_.grid_size(s));
    if (it->second.shape() != Shape{g, g, 2})
      throw std::invalid_argument("decode: score map at scale " + std::to_string(s) +
                                  " has shape " + shape_to_string(it->second.shape()));
    return it->second;
  };
  Cache local;
  Cache& c = cache ? *cache : local;
  c = Cache{};

  c.top_in = map_at(cfg_.top_scale);
  c.top_pre = apply_layer(top_, c.top_in);
  Tensor h = relu(c.top_pre);
  int s = cfg_.top_scale - 1;
  for (const auto& block : blocks_) {
    Cache::BlockCache bc;
    bc.prev = std::move(h);
    bc.upsampled = upsample(bc.prev);
    bc.up_pre = apply_layer(block.up, bc.upsampled);
    bc.up_act = relu(bc.up_pre);
    bc.current = map_at(s);
    bc.fuse = gated_fuse(gating_ ? &block.gate : nullptr, bc.up_act, bc.current);
    bc.mix_pre = apply_layer(block.mix, bc.fuse.fused);
    h = relu(bc.mix_pre);
    c.blocks.push_back(std::move(bc));
    --s;
  }
  Tensor x = std::move(h);
  for (std::size_t i = 0; i < final_.size(); ++i) {
    c.final_in.push_back(upsample(x));
    c.final_pre.push_back(apply_layer(final_[i], c.final_in.back()));
    x = i + 1 < final_.size() ? relu(c.final_pre.back()) : c.final_pre.back();
  }
  c.probs = apply_layer(Layer::sigmoid(), x);
  return {slice_channels(c.probs, 0, 1), slice_channels(c.probs, 1, 1)};
}

std::map<int, Tensor> Decoder::backward(const Cache& cache, const Tensor& dmask1,
                                        const Tensor& dmask2) {
  std::map<int, Tensor> grads;
  const Tensor dprobs = apply_layer(Layer::concat_channels(), dmask1, dmask2);
  if (dprobs.shape() != cache.probs.shape())
    throw std::invalid_argument("decoder backward: mask gradient shape mismatch");
  Tensor dx(dprobs.shape());
  for (std::size_t i = 0; i < dx.size(); ++i) {
    const double p = cache.probs[i];
    dx[i] = dprobs[i] * p * (1.0 - p);
  }
  for (std::size_t i = final_.size(); i-- > 0;) {
    if (i + 1 < final_.size()) dx = relu_backward(cache.final_pre[i], dx);
    auto g = backprop(final_[i], cache.final_in[i], dx);
    accumulate(final_[i], g);
    dx = upsample_backward(g.input_grad);
  }
  int s = cfg_.min_scale;
  for (std::size_t b = blocks_.size(); b-- > 0; ++s) {
    auto& block = blocks_[b];
    const auto& bc = cache.blocks[b];
    auto gm = backprop(block.mix, bc.fuse.fused, relu_backward(bc.mix_pre, dx));
    accumulate(block.mix, gm);
    auto fg = gated_fuse_backward(gating_ ? &block.gate : nullptr, bc.up_act, bc.current, bc.fuse,
                                  gm.input_grad);
    if (fg.gate) accumulate(block.gate, *fg.gate);
    grads[s] = std::move(fg.current);
    auto gu = backprop(block.up, bc.upsampled, relu_backward(bc.up_pre, fg.prev_up));
    accumulate(block.up, gu);
    dx = upsample_backward(gu.input_grad);
  }
  auto gt = backprop(top_, cache.top_in, relu_backward(cache.top_pre, dx));
  accumulate(top_, gt);
  grads[cfg_.top_scale] = std::move(gt.input_grad);
  return grads;
}

// ---------------------------------------------------------------------------
// Model

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& sc = config_.scales;
  encoder_ = Encoder(sc, config_.init_seed);
  for (int s = sc.min_scale; s <= sc.top_scale; ++s) {
    const std::uint64_t seed = Rng(config_.init_seed).fork("detector.scale" + std::to_string(s)).next_u64();
    detectors_.emplace(s, OverlapDetector(sc.channels(s), config_.detector_hidden,
                                          config_.mode == AblationMode::dot_product, seed));
  }
  decoder_ = Decoder(sc, config_.decoder_channels, config_.mode != AblationMode::no_gating,
                     config_.init_seed);
}

std::vector<std::pair<std::string, Tensor*>> Model::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  auto add_layer = [&](const std::string& path, Layer& l) {
    if (l.params.empty()) return;
    out.emplace_back(path + (l.kind == LayerKind::conv2d ? ".kernel" : ".weight"), &l.weight());
    out.emplace_back(path + ".bias", &l.bias());
  };
  const auto& sc = config_.scales;
  for (int s = 1; s <= sc.top_scale; ++s) {
    const std::string base = "encoder.scale" + std::to_string(s);
    add_layer(base + ".conv1", encoder_.convs()[static_cast<std::size_t>(2 * (s - 1))]);
    add_layer(base + ".conv2", encoder_.convs()[static_cast<std::size_t>(2 * (s - 1) + 1)]);
  }
  for (auto& [s, det] : detectors_) {
    const std::string base = "detector.scale" + std::to_string(s);
    add_layer(base + ".hidden", det.hidden_layer());
    add_layer(base + ".output", det.output_layer());
  }
  add_layer("decoder.top", decoder_.top());
  int s = sc.top_scale - 1;
  for (auto& block : decoder_.blocks()) {
    const std::string base = "decoder.scale" + std::to_string(s--);
    add_layer(base + ".up", block.up);
    if (decoder_.gating()) add_layer(base + ".gate", block.gate);
    add_layer(base + ".mix", block.mix);
  }
  for (std::size_t i = 0; i < decoder_.final_convs().size(); ++i)
    add_layer("decoder.final" + std::to_string(i), decoder_.final_convs()[i]);
  return out;
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void Model::zero_grad() {
  for (auto* t : parameters()) t->zero_grad();
}

std::vector<std::uint8_t> binarize(const Tensor& prob, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("binarize: threshold must lie in (0, 1)");
  std::vector<std::uint8_t> mask(prob.size());
  for (std::size_t i = 0; i < prob.size(); ++i) mask[i] = prob[i] >= threshold ? 1 : 0;
  return mask;
}

}  // namespace monet
