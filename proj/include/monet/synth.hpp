#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "monet/pyramid.hpp"
#include "monet/rng.hpp"
#include "monet/tensor.hpp"

namespace monet {

/// A patch pair with positive pixel overlap, by grid (row, col) in each image.
struct OverlapAnnotation {
  int r1 = 0, c1 = 0, r2 = 0, c2 = 0;
  long long overlap = 0;
  bool operator==(const OverlapAnnotation&) const = default;
};

struct ScaleAnnotations {
  int scale = 0;
  std::vector<OverlapAnnotation> pairs;  // sorted by (r1, c1, r2, c2)
  bool operator==(const ScaleAnnotations&) const = default;
};

/// Reusable duplication recipe: a correspondence plus its exact per-scale
/// patch-pair overlaps, independent of the images it is later applied to.
struct AnnotationTemplate {
  std::string id;
  std::string cfg_hash;
  DuplicationCorrespondence correspondence;
  std::vector<ScaleAnnotations> per_scale;  // top scale first

  const ScaleAnnotations& at_scale(int scale) const;
};

/// Derives every non-zero exact_overlap pair at each searched scale.
AnnotationTemplate annotate(const ScaleConfig& cfg, const DuplicationCorrespondence& corr,
                            std::string id);

/// Region side lengths uniform in [min_region, max_region], positions uniform
/// over all in-bounds placements.
AnnotationTemplate generate_template(const ScaleConfig& cfg, Rng& rng, int min_region,
                                     int max_region, std::string id);

nlohmann::json template_to_json(const AnnotationTemplate& t);
AnnotationTemplate template_from_json(const nlohmann::json& j);
void save_template(const std::filesystem::path& path, const AnnotationTemplate& t);
AnnotationTemplate load_template(const std::filesystem::path& path);

struct SyntheticSample {
  Tensor image1, image2;                          // [N, N, 3] in [0, 1]
  std::vector<std::uint8_t> gt_mask1, gt_mask2;   // N * N, 0/1
  std::string template_id;
  bool manipulated = false;
};

/// image1 = a; image2 = b with a's src_rect pasted onto dst_rect.
SyntheticSample apply_template(const ScaleConfig& cfg, const AnnotationTemplate& t,
                               const Tensor& a, const Tensor& b);

/// Unmodified pair with empty masks.
SyntheticSample make_negative_sample(const Tensor& a, const Tensor& b);

struct Triplet {
  int scale = 0;
  PatchId anchor;    // image 1 or 2
  PatchId positive;  // other image
  PatchId negative;  // other image
  long long o_plus = 0;
  long long o_minus = 0;
};

/// k triplets at one scale. The anchor is a patch with a positive-overlap
/// partner (image chosen at random), the positive its largest-overlap partner,
/// the negative a uniformly drawn zero-overlap patch of the other image, or,
/// when none exists, its smallest-overlap patch.
std::vector<Triplet> sample_triplets(const ScaleConfig& cfg, const AnnotationTemplate& t,
                                     int scale, int k, Rng& rng);

/// Seeded value-noise texture with soft coloured blobs, [n, n, 3] in [0, 1].
Tensor procedural_image(int n, Rng& rng);

}  // namespace monet
