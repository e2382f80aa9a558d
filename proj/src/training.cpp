#include "monet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "monet/io.hpp"
#include "monet/search.hpp"

namespace monet {

double margin_rank_loss(double x1, double x2, double m) {
  return std::max(0.0, (x2 - x1) + m);
}

double margin_rank_grad(double x1, double x2, double m) {
  return (x2 - x1) + m > 0.0 ? -1.0 : 0.0;
}

double flexible_margin(long long o_plus, long long o_minus, int d) {
  const long long area = static_cast<long long>(d) * d;
  if (d < 1 || o_minus < 0 || o_plus > area || o_plus <= o_minus)
    throw std::invalid_argument("flexible_margin: invalid triplet (o+=" + std::to_string(o_plus) +
                                ", o-=" + std::to_string(o_minus) + ", d=" + std::to_string(d) +
                                ")");
  return static_cast<double>(o_plus - o_minus) / static_cast<double>(area);
}

double flexible_margin_loss(double x1, double x2, long long o_plus, long long o_minus, int d) {
  return margin_rank_loss(x1, x2, flexible_margin(o_plus, o_minus, d));
}

double bce_loss(const Tensor& prob, const Tensor& target, Tensor* grad) {
  if (prob.shape() != target.shape())
    throw std::invalid_argument("bce_loss: prediction " + shape_to_string(prob.shape()) +
                                " vs target " + shape_to_string(target.shape()));
  if (grad) *grad = Tensor(prob.shape());
  const double n = static_cast<double>(prob.size());
  double total = 0.0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const double raw = prob[i];
    const double p = std::clamp(raw, kBceEps, 1.0 - kBceEps);
    const double y = target[i];
    total += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    if (grad && raw == p) (*grad)[i] = (-y / p + (1.0 - y) / (1.0 - p)) / n;
  }
  return total / n;
}

double bce_loss(const Tensor& prob1, const Tensor& prob2, const Tensor& target1,
                const Tensor& target2, Tensor* grad1, Tensor* grad2) {
  const double n1 = static_cast<double>(prob1.size()), n2 = static_cast<double>(prob2.size());
  const double l1 = bce_loss(prob1, target1, grad1);
  const double l2 = bce_loss(prob2, target2, grad2);
  const double w1 = n1 / (n1 + n2), w2 = n2 / (n1 + n2);
  if (grad1)
    for (auto& g : grad1->data()) g *= w1;
  if (grad2)
    for (auto& g : grad2->data()) g *= w2;
  return w1 * l1 + w2 * l2;
}

std::string_view to_string(MarginMode mode) {
  return mode == MarginMode::regular ? "regular" : "flexible";
}

MarginMode margin_mode_from_string(std::string_view name) {
  if (name == "regular") return MarginMode::regular;
  if (name == "flexible") return MarginMode::flexible;
  throw std::invalid_argument("unknown margin mode '" + std::string(name) +
                              "' (expected regular or flexible)");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("TrainConfig: " + m); };
  if (pretrain_epochs < 0 || e2e_epochs < 0) fail("epochs must be >= 0");
  if (!(lr > 0.0) && lr != 0.0) fail("lr must be >= 0");
  if (!std::isfinite(margin) || margin < 0.0) fail("margin must be finite and >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (bce_weight < 0.0 || rank_weight < 0.0) fail("loss weights must be >= 0");
  if (triplets_per_scale < 1 || val_triplets_per_scale < 0 || triplets_per_pair < 1)
    fail("triplet counts must be positive");
  if (e2e_pairs < 1 || val_pairs < 0 || e2e_triplets_per_pair < 0) fail("pair counts must be positive");
  if (negative_fraction < 0.0 || negative_fraction > 1.0) fail("negative_fraction must lie in [0, 1]");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"margin", c.margin},
       {"margin_mode", to_string(c.margin_mode)},
       {"pretrain_epochs", c.pretrain_epochs},
       {"e2e_epochs", c.e2e_epochs},
       {"lr", c.lr},
       {"batch_size", c.batch_size},
       {"seed", c.seed},
       {"bce_weight", c.bce_weight},
       {"rank_weight", c.rank_weight},
       {"triplets_per_scale", c.triplets_per_scale},
       {"val_triplets_per_scale", c.val_triplets_per_scale},
       {"triplets_per_pair", c.triplets_per_pair},
       {"e2e_pairs", c.e2e_pairs},
       {"e2e_triplets_per_pair", c.e2e_triplets_per_pair},
       {"val_pairs", c.val_pairs},
       {"negative_fraction", c.negative_fraction}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.margin = j.value("margin", d.margin);
  c.margin_mode = margin_mode_from_string(j.value("margin_mode", std::string(to_string(d.margin_mode))));
  c.pretrain_epochs = j.value("pretrain_epochs", d.pretrain_epochs);
  c.e2e_epochs = j.value("e2e_epochs", d.e2e_epochs);
  c.lr = j.value("lr", d.lr);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
  c.bce_weight = j.value("bce_weight", d.bce_weight);
  c.rank_weight = j.value("rank_weight", d.rank_weight);
  c.triplets_per_scale = j.value("triplets_per_scale", d.triplets_per_scale);
  c.val_triplets_per_scale = j.value("val_triplets_per_scale", d.val_triplets_per_scale);
  c.triplets_per_pair = j.value("triplets_per_pair", d.triplets_per_pair);
  c.e2e_pairs = j.value("e2e_pairs", d.e2e_pairs);
  c.e2e_triplets_per_pair = j.value("e2e_triplets_per_pair", d.e2e_triplets_per_pair);
  c.val_pairs = j.value("val_pairs", d.val_pairs);
  c.negative_fraction = j.value("negative_fraction", d.negative_fraction);
  c.validate();
}

double triplet_margin(const TrainConfig& cfg, const ScaleConfig& scales, const Triplet& t) {
  if (cfg.margin_mode == MarginMode::regular) return cfg.margin;
  return flexible_margin(t.o_plus, t.o_minus, scales.patch_dim(t.scale));
}

// ---------------------------------------------------------------------------
// Data

BaseImageSource::BaseImageSource(std::vector<Tensor> pool) : pool_(std::move(pool)) {
  for (const auto& t : pool_)
    if (t.rank() != 3 || t.dim(2) != 3)
      throw std::invalid_argument("BaseImageSource: expected [H, W, 3] images, got " +
                                  shape_to_string(t.shape()));
}

Tensor BaseImageSource::draw(int n, Rng& rng) const {
  if (pool_.empty()) return procedural_image(n, rng);
  const auto i = rng.uniform_int(0, static_cast<std::int64_t>(pool_.size()) - 1);
  return resize_bilinear(pool_[static_cast<std::size_t>(i)], n);
}

SyntheticStream::SyntheticStream(ScaleConfig cfg, std::vector<AnnotationTemplate> templates,
                                 BaseImageSource images)
    : cfg_(cfg), templates_(std::move(templates)), images_(std::move(images)) {
  cfg_.validate();
  if (templates_.empty()) throw std::invalid_argument("SyntheticStream: no templates");
  const auto hash = config_hash(cfg_);
  for (const auto& t : templates_)
    if (t.cfg_hash != hash)
      throw std::invalid_argument("template " + t.id + " was generated for config " + t.cfg_hash +
                                  ", not " + hash);
}

const AnnotationTemplate& SyntheticStream::find(const std::string& id) const {
  for (const auto& t : templates_)
    if (t.id == id) return t;
  throw std::out_of_range("unknown template id " + id);
}

SyntheticSample SyntheticStream::positive(Rng& rng) const {
  const auto& t = templates_[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<std::int64_t>(templates_.size()) - 1))];
  Tensor a = images_.draw(cfg_.image_size, rng);
  Tensor b = images_.draw(cfg_.image_size, rng);
  return apply_template(cfg_, t, a, b);
}

SyntheticSample SyntheticStream::negative(Rng& rng) const {
  Tensor a = images_.draw(cfg_.image_size, rng);
  Tensor b = images_.draw(cfg_.image_size, rng);
  return make_negative_sample(a, b);
}

namespace {

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

std::vector<SyntheticSample> SyntheticStream::mixed(int count, double negative_fraction,
                                                    Rng& rng) const {
  const auto negatives = static_cast<int>(std::lround(count * negative_fraction));
  std::vector<SyntheticSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(i < negatives ? negative(rng) : positive(rng));
  shuffle(out, rng);
  return out;
}

TripletSet make_triplet_set(const SyntheticStream& stream, int per_scale, int per_pair, Rng& rng) {
  if (per_scale < 0 || per_pair < 1)
    throw std::invalid_argument("make_triplet_set: need per_scale >= 0 and per_pair >= 1");
  const auto& cfg = stream.scales();
  TripletSet set;
  for (int done = 0; done < per_scale; done += per_pair) {
    const int k = std::min(per_pair, per_scale - done);
    TripletItem item{stream.positive(rng), {}};
    const auto& t = stream.find(item.sample.template_id);
    for (int s = cfg.top_scale; s >= cfg.min_scale; --s) {
      auto ts = sample_triplets(cfg, t, s, k, rng);
      item.triplets.insert(item.triplets.end(), ts.begin(), ts.end());
    }
    set.push_back(std::move(item));
  }
  return set;
}

// ---------------------------------------------------------------------------
// Metrics log

std::string metrics_csv_header() {
  return "epoch,phase,rank_loss,bce_loss,val_pixel_mcc,val_rank_loss,val_pos_score,val_neg_score";
}

std::string metrics_csv_row(const EpochMetrics& m) {
  auto f = [](double v) -> std::string {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.8g", v);
    return buf;
  };
  std::ostringstream os;
  os << m.epoch << ',' << m.phase << ',' << f(m.rank_loss) << ',' << f(m.bce_loss) << ','
     << f(m.val_pixel_mcc) << ',' << f(m.val_rank_loss) << ',' << f(m.val_pos_score) << ','
     << f(m.val_neg_score);
  return os.str();
}

// ---------------------------------------------------------------------------
// Triplet forward/backward

namespace {

struct PairCells {
  std::size_t u1, u2;  // image-1 and image-2 flat cell indices
};

std::size_t flat(const PatchId& p, int grid) {
  return static_cast<std::size_t>(p.row) * static_cast<std::size_t>(grid) +
         static_cast<std::size_t>(p.col);
}

/// (positive pair, negative pair) as image-1/image-2 cells.
std::pair<PairCells, PairCells> triplet_cells(const ScaleConfig& cfg, const Triplet& t) {
  const int g = cfg.grid_size(t.scale);
  const auto a = flat(t.anchor, g), p = flat(t.positive, g), n = flat(t.negative, g);
  if (t.anchor.image == 1) return {{a, p}, {a, n}};
  return {{p, a}, {n, a}};
}

std::span<const double> cell(const Tensor& f, std::size_t u, std::size_t c) {
  return f.data().subspan(u * c, c);
}

std::span<double> cell(Tensor& f, std::size_t u, std::size_t c) {
  return f.data().subspan(u * c, c);
}

/// Adds the ranking-loss gradients of `triplets` (scaled by `weight`) into
/// detector params and df1/df2; returns the summed loss.
double rank_forward_backward(Model& model, const FeatureMaps& f1, const FeatureMaps& f2,
                             FeatureMaps& df1, FeatureMaps& df2, const std::vector<Triplet>& triplets,
                             const TrainConfig& cfg, double weight) {
  const auto& scales = model.scales();
  double total = 0.0;
  for (const auto& t : triplets) {
    auto& det = model.detector(t.scale);
    const auto c = static_cast<std::size_t>(det.channels());
    const auto& a1 = f1.at(t.scale);
    const auto& a2 = f2.at(t.scale);
    const auto [pos, neg] = triplet_cells(scales, t);
    const double x1 = det.score(cell(a1, pos.u1, c), cell(a2, pos.u2, c));
    const double x2 = det.score(cell(a1, neg.u1, c), cell(a2, neg.u2, c));
    const double m = triplet_margin(cfg, scales, t);
    total += margin_rank_loss(x1, x2, m);
    const double g = margin_rank_grad(x1, x2, m) * weight;
    if (g == 0.0) continue;
    auto& d1 = df1.at(t.scale);
    auto& d2 = df2.at(t.scale);
    det.backward(cell(a1, pos.u1, c), cell(a2, pos.u2, c), g, cell(d1, pos.u1, c), cell(d2, pos.u2, c));
    det.backward(cell(a1, neg.u1, c), cell(a2, neg.u2, c), -g, cell(d1, neg.u1, c), cell(d2, neg.u2, c));
  }
  return total;
}

FeatureMaps zeros_like(const FeatureMaps& f) {
  FeatureMaps out;
  for (const auto& [s, t] : f) out[s] = Tensor(t.shape());
  return out;
}

AdamOptimizer make_optimizer(Model& model, const TrainConfig& cfg, const RunOptions& options) {
  AdamOptions ao;
  ao.lr = cfg.lr;
  AdamOptimizer opt(model.parameters(), ao);
  if (options.resume) opt.restore(*options.resume);
  return opt;
}

Tensor mask_tensor(const std::vector<std::uint8_t>& mask, std::size_t n) {
  Tensor t({n, n, 1});
  for (std::size_t i = 0; i < mask.size(); ++i) t[i] = mask[i] ? 1.0 : 0.0;
  return t;
}

}  // namespace

TripletScores score_triplets(const Model& model, const TripletSet& set, const TrainConfig& cfg) {
  TripletScores out;
  const auto& scales = model.scales();
  for (const auto& item : set) {
    const auto f1 = encode(model, item.sample.image1);
    const auto f2 = encode(model, item.sample.image2);
    for (const auto& t : item.triplets) {
      const auto& det = model.detector(t.scale);
      const auto c = static_cast<std::size_t>(det.channels());
      const auto [pos, neg] = triplet_cells(scales, t);
      const double x1 = det.score(cell(f1.at(t.scale), pos.u1, c), cell(f2.at(t.scale), pos.u2, c));
      const double x2 = det.score(cell(f1.at(t.scale), neg.u1, c), cell(f2.at(t.scale), neg.u2, c));
      out.rank_loss += margin_rank_loss(x1, x2, triplet_margin(cfg, scales, t));
      out.pos_score += x1;
      out.neg_score += x2;
      ++out.count;
    }
  }
  if (out.count) {
    const auto n = static_cast<double>(out.count);
    out.rank_loss /= n;
    out.pos_score /= n;
    out.neg_score /= n;
  }
  return out;
}

std::vector<EpochMetrics> pretrain(Model& model, const SyntheticStream& stream,
                                   const TripletSet& val, const TrainConfig& cfg,
                                   const RunOptions& options) {
  cfg.validate();
  auto opt = make_optimizer(model, cfg, options);
  const Rng root = Rng(cfg.seed).fork("pretrain");
  std::vector<EpochMetrics> log;

  for (int epoch = options.start_epoch + 1; epoch <= cfg.pretrain_epochs; ++epoch) {
    Rng rng = root.fork("epoch-" + std::to_string(epoch));
    const auto train = make_triplet_set(stream, cfg.triplets_per_scale, cfg.triplets_per_pair, rng);
    if (train.empty()) throw std::invalid_argument("pretrain: empty triplet stream");
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order, rng);

    double loss_sum = 0.0;
    std::size_t triplet_count = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const auto end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::size_t batch_triplets = 0;
      for (auto i = start; i < end; ++i) batch_triplets += train[order[i]].triplets.size();
      if (batch_triplets == 0) continue;
      const double w = 1.0 / static_cast<double>(batch_triplets);

      model.zero_grad();
      for (auto i = start; i < end; ++i) {
        const auto& item = train[order[i]];
        Encoder::Cache c1, c2;
        const auto f1 = model.encoder().forward(item.sample.image1, &c1);
        const auto f2 = model.encoder().forward(item.sample.image2, &c2);
        auto df1 = zeros_like(f1), df2 = zeros_like(f2);
        loss_sum += rank_forward_backward(model, f1, f2, df1, df2, item.triplets, cfg, w);
        model.encoder().backward(c1, df1);
        model.encoder().backward(c2, df2);
      }
      triplet_count += batch_triplets;
      opt.step();
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.phase = "pretrain";
    m.rank_loss = triplet_count ? loss_sum / static_cast<double>(triplet_count) : 0.0;
    if (!val.empty()) {
      const auto v = score_triplets(model, val, cfg);
      m.val_rank_loss = v.rank_loss;
      m.val_pos_score = v.pos_score;
      m.val_neg_score = v.neg_score;
    }
    if (options.log) *options.log << metrics_csv_row(m) << std::endl;
    log.push_back(m);
    if (options.on_epoch) options.on_epoch(m, model, opt.state());
  }
  return log;
}

std::vector<EvalItem> predict_items(const Model& model, const std::vector<SyntheticSample>& samples,
                                    double threshold) {
  std::vector<EvalItem> items;
  items.reserve(samples.size() * 2);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const auto out = run_pipeline(model, s.image1, s.image2);
    const std::string name = "pair" + std::to_string(i);
    items.push_back({name + "/1", "", binarize(out.mask1, threshold), s.gt_mask1, s.manipulated});
    items.push_back({name + "/2", "", binarize(out.mask2, threshold), s.gt_mask2, s.manipulated});
  }
  return items;
}

std::vector<EpochMetrics> train_end_to_end(Model& model, const SyntheticStream& stream,
                                           const std::vector<SyntheticSample>& val,
                                           const TrainConfig& cfg, bool pretrained,
                                           const RunOptions& options) {
  cfg.validate();
  if (!pretrained && options.log)
    *options.log << "warning: end-to-end training starts from an unpretrained model" << std::endl;
  auto opt = make_optimizer(model, cfg, options);
  const auto& scales = model.scales();
  const auto n = static_cast<std::size_t>(scales.image_size);
  const Rng root = Rng(cfg.seed).fork("e2e");
  std::vector<EpochMetrics> log;

  for (int epoch = options.start_epoch + 1; epoch <= cfg.e2e_epochs; ++epoch) {
    Rng rng = root.fork("epoch-" + std::to_string(epoch));
    const auto pairs = stream.mixed(cfg.e2e_pairs, cfg.negative_fraction, rng);
    double bce_sum = 0.0, rank_sum = 0.0;
    std::size_t rank_count = 0;

    for (std::size_t start = 0; start < pairs.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const auto end = std::min(pairs.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double w = 1.0 / static_cast<double>(end - start);
      model.zero_grad();
      for (auto i = start; i < end; ++i) {
        const auto& s = pairs[i];
        PipelineTrace trace;
        const auto out = run_pipeline(model, s.image1, s.image2, {&trace, nullptr});
        Tensor g1, g2;
        bce_sum += bce_loss(out.mask1, out.mask2, mask_tensor(s.gt_mask1, n),
                            mask_tensor(s.gt_mask2, n), &g1, &g2);
        for (auto& g : g1.data()) g *= cfg.bce_weight * w;
        for (auto& g : g2.data()) g *= cfg.bce_weight * w;

        auto df1 = zeros_like(trace.f1), df2 = zeros_like(trace.f2);
        if (s.manipulated && cfg.e2e_triplets_per_pair > 0 && cfg.rank_weight > 0.0) {
          const auto& t = stream.find(s.template_id);
          std::vector<Triplet> triplets;
          for (int sc = scales.top_scale; sc >= scales.min_scale; --sc) {
            auto ts = sample_triplets(scales, t, sc, cfg.e2e_triplets_per_pair, rng);
            triplets.insert(triplets.end(), ts.begin(), ts.end());
          }
          const double tw = cfg.rank_weight * w / static_cast<double>(triplets.size());
          rank_sum += rank_forward_backward(model, trace.f1, trace.f2, df1, df2, triplets, cfg, tw);
          rank_count += triplets.size();
        }
        backward_pipeline(model, trace, out, g1, g2, std::move(df1), std::move(df2));
      }
      opt.step();
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.phase = "train";
    m.bce_loss = bce_sum / static_cast<double>(pairs.size());
    m.rank_loss = rank_count ? rank_sum / static_cast<double>(rank_count) : 0.0;
    if (!val.empty()) m.val_pixel_mcc = evaluate_pixel(predict_items(model, val)).mcc;
    if (options.log) *options.log << metrics_csv_row(m) << std::endl;
    log.push_back(m);
    if (options.on_epoch) options.on_epoch(m, model, opt.state());
  }
  return log;
}

}  // namespace monet
