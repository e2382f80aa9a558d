#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "monet/adam.hpp"
#include "monet/evaluation.hpp"
#include "monet/network.hpp"
#include "monet/synth.hpp"

namespace monet {

// ---------------------------------------------------------------------------
// Losses

/// max(0, (x2 - x1) + m).
double margin_rank_loss(double x1, double x2, double m);
/// d/dx1 of margin_rank_loss: -1 inside the hinge, 0 where it is flat
/// (including the kink). d/dx2 is the negation.
double margin_rank_grad(double x1, double x2, double m);

/// (o_plus - o_minus) / d^2. Throws unless 0 <= o_minus < o_plus <= d^2.
double flexible_margin(long long o_plus, long long o_minus, int d);
double flexible_margin_loss(double x1, double x2, long long o_plus, long long o_minus, int d);

constexpr double kBceEps = 1e-7;

/// Mean binary cross-entropy over all elements, with p clamped to
/// [eps, 1 - eps]. `grad` (optional) receives dL/dp, zero where clamped.
double bce_loss(const Tensor& prob, const Tensor& target, Tensor* grad = nullptr);
/// Mean over the pixels of both masks.
double bce_loss(const Tensor& prob1, const Tensor& prob2, const Tensor& target1,
                const Tensor& target2, Tensor* grad1 = nullptr, Tensor* grad2 = nullptr);

// ---------------------------------------------------------------------------
// Configuration

enum class MarginMode { regular, flexible };

std::string_view to_string(MarginMode mode);
MarginMode margin_mode_from_string(std::string_view name);

struct TrainConfig {
  double margin = 0.5;
  MarginMode margin_mode = MarginMode::regular;
  int pretrain_epochs = 25;
  int e2e_epochs = 50;
  double lr = 1e-4;
  int batch_size = 4;  // synthetic pairs per optimizer step
  std::uint64_t seed = 0;
  double bce_weight = 1.0;
  double rank_weight = 1.0;

  int triplets_per_scale = 2000;     // pretraining set size, per scale
  int val_triplets_per_scale = 500;
  int triplets_per_pair = 25;        // per scale, from one synthetic pair
  int e2e_pairs = 200;               // fresh synthetic pairs per end-to-end epoch
  int e2e_triplets_per_pair = 8;     // per scale, ranking term of the end-to-end loss
  int val_pairs = 40;
  double negative_fraction = 0.5;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

/// Ranking margin for one triplet under the configured mode.
double triplet_margin(const TrainConfig& cfg, const ScaleConfig& scales, const Triplet& t);

// ---------------------------------------------------------------------------
// Data

/// Base images: seeded procedural textures, or a fixed pool of loaded images
/// resized to N.
class BaseImageSource {
 public:
  BaseImageSource() = default;
  explicit BaseImageSource(std::vector<Tensor> pool);

  Tensor draw(int n, Rng& rng) const;
  bool procedural() const { return pool_.empty(); }

 private:
  std::vector<Tensor> pool_;
};

/// Applies randomly chosen templates to random base-image pairs.
class SyntheticStream {
 public:
  SyntheticStream(ScaleConfig cfg, std::vector<AnnotationTemplate> templates,
                  BaseImageSource images = {});

  const ScaleConfig& scales() const { return cfg_; }
  const std::vector<AnnotationTemplate>& templates() const { return templates_; }
  const AnnotationTemplate& find(const std::string& id) const;

  SyntheticSample positive(Rng& rng) const;
  SyntheticSample negative(Rng& rng) const;
  /// `count` samples, the first round(count * negative_fraction) negative,
  /// then shuffled.
  std::vector<SyntheticSample> mixed(int count, double negative_fraction, Rng& rng) const;

 private:
  ScaleConfig cfg_;
  std::vector<AnnotationTemplate> templates_;
  BaseImageSource images_;
};

struct TripletItem {
  SyntheticSample sample;
  std::vector<Triplet> triplets;  // all scales
};
using TripletSet = std::vector<TripletItem>;

/// Exactly `per_scale` triplets at every searched scale, at most `per_pair`
/// per scale drawn from each synthetic pair.
TripletSet make_triplet_set(const SyntheticStream& stream, int per_scale, int per_pair, Rng& rng);

// ---------------------------------------------------------------------------
// Training loops

struct EpochMetrics {
  static constexpr double kNone = std::numeric_limits<double>::quiet_NaN();
  int epoch = 0;
  std::string phase;
  double rank_loss = kNone;
  double bce_loss = kNone;
  double val_pixel_mcc = kNone;
  double val_rank_loss = kNone;
  double val_pos_score = kNone;
  double val_neg_score = kNone;
};

/// epoch,phase,rank_loss,bce_loss,val_pixel_mcc,val_rank_loss,val_pos_score,val_neg_score
std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);

struct TripletScores {
  double rank_loss = 0.0;  // mean over triplets
  double pos_score = 0.0;  // mean detector score on (anchor, positive)
  double neg_score = 0.0;
  std::size_t count = 0;
};

TripletScores score_triplets(const Model& model, const TripletSet& set, const TrainConfig& cfg);

struct RunOptions {
  int start_epoch = 0;                  // epochs already completed (resume)
  const AdamState* resume = nullptr;    // optimizer state to continue from
  std::function<void(const EpochMetrics&, Model&, const AdamState&)> on_epoch;
  std::ostream* log = nullptr;
};

/// Jointly trains the encoder and detectors on triplets with the ranking loss.
/// Every epoch draws a fresh set of cfg.triplets_per_scale triplets per scale
/// from `stream`; `val` stays fixed.
std::vector<EpochMetrics> pretrain(Model& model, const SyntheticStream& stream,
                                   const TripletSet& val, const TrainConfig& cfg,
                                   const RunOptions& options = {});

/// Per pair: both images' masks against ground truth, label = manipulated.
std::vector<EvalItem> predict_items(const Model& model, const std::vector<SyntheticSample>& samples,
                                    double threshold = 0.5);

/// BCE on the masks plus the ranking loss on triplets from each positive
/// pair's template; validation pixel MCC after every epoch.
std::vector<EpochMetrics> train_end_to_end(Model& model, const SyntheticStream& stream,
                                           const std::vector<SyntheticSample>& val,
                                           const TrainConfig& cfg, bool pretrained,
                                           const RunOptions& options = {});

}  // namespace monet
