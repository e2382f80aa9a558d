#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace monet {

struct ConfusionCounts {
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::uint64_t total() const { return tp + tn + fp + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
  bool operator==(const ConfusionCounts&) const = default;
};

void to_json(nlohmann::json& j, const ConfusionCounts& c);
void from_json(const nlohmann::json& j, ConfusionCounts& c);

/// Matthews correlation coefficient; 0 when any marginal is empty.
double mcc(const ConfusionCounts& c);

/// Pixel counts of one predicted mask against its ground truth (0/non-zero bytes).
ConfusionCounts count_pixels(std::span<const std::uint8_t> predicted,
                             std::span<const std::uint8_t> truth);

/// One scored image: its predicted and true masks plus the image-level label.
struct EvalItem {
  std::string name;
  std::string category;
  std::vector<std::uint8_t> predicted;
  std::vector<std::uint8_t> truth;
  bool label = false;
};

struct MetricResult {
  ConfusionCounts counts;
  double mcc = 0.0;
};

/// Sums pixel counts over every item, then takes a single MCC.
MetricResult evaluate_pixel(std::span<const EvalItem> items);

/// An image is predicted positive iff its mask has at least `min_area`
/// positive pixels.
MetricResult evaluate_image(std::span<const EvalItem> items, std::uint64_t min_area);

/// (N / 64)^2, i.e. 16 pixels at N = 256.
std::uint64_t default_min_area(int image_size);

struct CategoryMetrics {
  MetricResult pixel;
  MetricResult image;
};

struct EvalReport {
  MetricResult pixel;
  MetricResult image;
  std::uint64_t min_area = 1;
  std::map<std::string, CategoryMetrics> categories;  // empty tag -> "uncategorized"

  double pixel_mcc() const { return pixel.mcc; }
  double image_mcc() const { return image.mcc; }

  nlohmann::json to_json() const;
  /// category,image_mcc,pixel_mcc,... with an "all" row first.
  std::string to_csv() const;
};

EvalReport evaluate(std::span<const EvalItem> items, std::uint64_t min_area);

struct VariantRow {
  std::string variant;
  double image_mcc = 0.0;
  double pixel_mcc = 0.0;
  bool operator==(const VariantRow&) const = default;
};

struct VariantTable {
  std::vector<VariantRow> rows;  // descending pixel MCC

  /// Header: variant,image_mcc,pixel_mcc
  std::string to_csv() const;
};

VariantTable compare_variants(const std::vector<std::pair<std::string, EvalReport>>& reports);

}  // namespace monet
