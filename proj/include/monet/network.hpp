#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "monet/layers.hpp"
#include "monet/pyramid.hpp"

namespace monet {

enum class AblationMode { full, no_gating, dot_product };

std::string_view to_string(AblationMode mode);
AblationMode ablation_from_string(std::string_view name);

struct ModelConfig {
  ScaleConfig scales;
  int detector_hidden = 64;
  int decoder_channels = 8;
  AblationMode mode = AblationMode::full;
  std::uint64_t init_seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);

/// Feature maps keyed by scale, each [grid(s), grid(s), channels(s)].
using FeatureMaps = std::map<int, Tensor>;

/// Per scale: 2x2 stride-2 conv + ReLU, then 1x1 conv + ReLU. Each scale-s
/// feature sees exactly the pixels of its own patch.
class Encoder {
 public:
  struct BlockCache {
    Tensor input, pre1, act1, pre2;
  };
  using Cache = std::vector<BlockCache>;

  Encoder() = default;
  Encoder(const ScaleConfig& cfg, std::uint64_t seed);

  FeatureMaps forward(const Tensor& image, Cache* cache = nullptr) const;
  /// Accumulates parameter gradients from dL/dF_s (missing scales count as 0).
  void backward(const Cache& cache, const FeatureMaps& feature_grads);

  std::vector<Layer>& convs() { return convs_; }
  const std::vector<Layer>& convs() const { return convs_; }

 private:
  ScaleConfig cfg_;
  std::vector<Layer> convs_;  // [2 * (s - 1)] stride-2, [2 * (s - 1) + 1] stride-1
};

/// Two-layer feed-forward scorer over a concatenated feature pair, or the
/// parameter-free sigmoid(f1 . f2) scorer in dot-product mode. Both feature
/// vectors are scaled to unit length first.
class OverlapDetector {
 public:
  OverlapDetector() = default;
  OverlapDetector(int channels, int hidden, bool dot_product, std::uint64_t seed);

  int channels() const { return channels_; }
  int hidden_units() const { return hidden_; }
  bool dot_product() const { return dot_; }

  double score(std::span<const double> f1, std::span<const double> f2) const;

  /// Half of the first layer applied to one unit-scaled feature vector: side 0 uses the
  /// columns for the image-1 vector, side 1 those for the image-2 vector.
  void project(std::span<const double> f, int side, std::span<double> out) const;
  /// Projections of every grid cell of an [G, G, C] map, row-major [G*G, hidden].
  std::vector<double> project_map(const Tensor& features, int side) const;
  /// Score from two projections produced by project().
  double score_projected(std::span<const double> a, std::span<const double> b) const;

  /// Backward of score(f1, f2) scaled by dscore; accumulates parameter grads
  /// and adds into df1/df2.
  void backward(std::span<const double> f1, std::span<const double> f2, double dscore,
                std::span<double> df1, std::span<double> df2);

  Layer& hidden_layer() { return hidden_layer_; }
  Layer& output_layer() { return output_layer_; }
  const Layer& hidden_layer() const { return hidden_layer_; }
  const Layer& output_layer() const { return output_layer_; }

 private:
  void check(std::span<const double> f1, std::span<const double> f2) const;

  int channels_ = 0;
  int hidden_ = 0;
  bool dot_ = false;
  Layer hidden_layer_;  // dense [hidden, 2C]
  Layer output_layer_;  // dense [1, hidden]
};

double detect_overlap(const OverlapDetector& detector, std::span<const double> f1,
                      std::span<const double> f2);

/// Patch pair by flat grid index (row * grid + col) in image 1 and image 2.
struct CandidatePair {
  int p1 = 0;
  int p2 = 0;
  bool operator==(const CandidatePair&) const = default;
};

struct CandidateSet {
  int scale = 0;
  int grid = 0;
  std::vector<CandidatePair> pairs;
};

/// Max-overlap maps for both images at one scale, with the argmax routing used
/// by the search and by backprop.
struct OverlapScoreMap {
  int scale = 0;
  int grid = 0;
  std::vector<double> o1, o2;
  std::vector<int> partner1, partner2;  // argmax partner cell, -1 if never compared
  std::vector<int> best1, best2;        // candidate index achieving the max, -1 if none

  /// [grid, grid, 2] with channel 0 = image 1, channel 1 = image 2.
  Tensor as_tensor() const;
};

/// Max/argmax reduction of per-candidate scores into both maps. Ties go to the
/// lowest (row, col) partner. With `frozen`, that map's routing is reused.
OverlapScoreMap reduce_max(const CandidateSet& candidates, std::span<const double> scores,
                           const OverlapScoreMap* frozen = nullptr);

/// Scores every candidate pair (one detector call each, logged to `ledger`)
/// and reduces by max per patch. Ties go to the lowest (row, col) partner.
/// With `frozen`, the max routing of that map is reused instead of recomputed.
OverlapScoreMap build_score_maps(const OverlapDetector& detector, const Tensor& f1,
                                 const Tensor& f2, const CandidateSet& candidates,
                                 ComparisonLedger* ledger = nullptr,
                                 const OverlapScoreMap* frozen = nullptr,
                                 std::vector<double>* pair_scores = nullptr);

struct FuseResult {
  Tensor fused;
  Tensor gate_pre;  // conv1x1 output before the sigmoid (empty without gating)
  Tensor gate;
};

/// concat(prev_up, g * current), g = sigmoid(conv1x1(prev_up)); without a gate
/// layer, concat(prev_up, current).
FuseResult gated_fuse(const Layer* gate, const Tensor& prev_up, const Tensor& current);

struct FuseGrads {
  Tensor prev_up;
  Tensor current;
  std::optional<LayerGrads> gate;
};

FuseGrads gated_fuse_backward(const Layer* gate, const Tensor& prev_up, const Tensor& current,
                              const FuseResult& forward, const Tensor& upstream);

/// Upsamples fused score maps back to full resolution and emits two
/// single-channel mask probabilities.
class Decoder {
 public:
  struct Block {
    Layer up;    // 3x3 after nearest-neighbour 2x upsampling
    Layer gate;  // 1x1 on the upsampled maps (unused when gating is off)
    Layer mix;   // 3x3 over the fused maps
  };
  struct Cache {
    Tensor top_in, top_pre;
    struct BlockCache {
      Tensor prev, upsampled, up_pre, up_act, current;
      FuseResult fuse;
      Tensor mix_pre;
    };
    std::vector<BlockCache> blocks;
    std::vector<Tensor> final_in, final_pre;
    Tensor probs;  // [N, N, 2]
  };

  Decoder() = default;
  Decoder(const ScaleConfig& cfg, int channels, bool gating, std::uint64_t seed);

  /// `score_maps` holds one [grid, grid, 2] tensor per searched scale.
  std::pair<Tensor, Tensor> forward(const std::map<int, Tensor>& score_maps,
                                    Cache* cache = nullptr) const;
  /// Returns dL/d(score map) per scale and accumulates parameter gradients.
  std::map<int, Tensor> backward(const Cache& cache, const Tensor& dmask1, const Tensor& dmask2);

  Layer& top() { return top_; }
  std::vector<Block>& blocks() { return blocks_; }
  std::vector<Layer>& final_convs() { return final_; }
  bool gating() const { return gating_; }

 private:
  ScaleConfig cfg_;
  bool gating_ = true;
  Layer top_;
  std::vector<Block> blocks_;  // scale top-1 down to min
  std::vector<Layer> final_;
};

/// Encoder, per-scale detectors and decoder of one model.
class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const ScaleConfig& scales() const { return config_.scales; }

  Encoder& encoder() { return encoder_; }
  const Encoder& encoder() const { return encoder_; }
  OverlapDetector& detector(int scale) { return detectors_.at(scale); }
  const OverlapDetector& detector(int scale) const { return detectors_.at(scale); }
  Decoder& decoder() { return decoder_; }
  const Decoder& decoder() const { return decoder_; }

  /// Every trainable tensor under a stable dotted path.
  std::vector<std::pair<std::string, Tensor*>> named_parameters();
  std::vector<Tensor*> parameters();
  void zero_grad();

 private:
  ModelConfig config_;
  Encoder encoder_;
  std::map<int, OverlapDetector> detectors_;
  Decoder decoder_;
};

FeatureMaps encode(const Model& model, const Tensor& image);

/// mask[p] = prob[p] >= threshold, as 0/1 bytes.
std::vector<std::uint8_t> binarize(const Tensor& prob, double threshold = 0.5);

}  // namespace monet
