#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

namespace monet {

/// Square-image scale pyramid. Scale s has a grid of N / 2^s patches, each
/// covering 2^s x 2^s pixels, and channels(top) / 2^(top - s) feature channels.
struct ScaleConfig {
  int image_size = 256;
  int top_scale = 5;
  int min_scale = 1;
  int top_channels = 256;

  static ScaleConfig full_size() { return {}; }
  /// N = 64, three scales, 64 channels at the top.
  static ScaleConfig desk() { return {64, 3, 1, 64}; }

  void validate() const;
  int grid_size(int scale) const;
  int patch_dim(int scale) const;
  /// Feature channels at `scale`; scale 0 is the RGB input.
  int channels(int scale) const;
  int num_scales() const { return top_scale - min_scale + 1; }
  bool has_scale(int scale) const { return scale >= min_scale && scale <= top_scale; }

  bool operator==(const ScaleConfig&) const = default;
};

void to_json(nlohmann::json& j, const ScaleConfig& cfg);
void from_json(const nlohmann::json& j, ScaleConfig& cfg);

/// Stable 16-hex-digit hash of a config, stored with templates.
std::string config_hash(const ScaleConfig& cfg);

struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  long long area() const { return static_cast<long long>(w) * h; }
  bool empty() const { return w <= 0 || h <= 0; }
  bool contains(int px, int py) const { return px >= x && px < x + w && py >= y && py < y + h; }
  bool operator==(const Rect&) const = default;
};

Rect intersect(const Rect& a, const Rect& b);

struct PatchId {
  int image = 1;
  int scale = 1;
  int row = 0;
  int col = 0;

  bool operator==(const PatchId&) const = default;
  auto operator<=>(const PatchId&) const = default;
};

/// Rigid translation copy of src_rect (image 1) onto dst_rect (image 2).
struct DuplicationCorrespondence {
  Rect src;
  Rect dst;

  void validate(const ScaleConfig& cfg) const;
  int dx() const { return dst.x - src.x; }
  int dy() const { return dst.y - src.y; }
  DuplicationCorrespondence reversed() const { return {dst, src}; }
};

void to_json(nlohmann::json& j, const DuplicationCorrespondence& c);
void from_json(const nlohmann::json& j, DuplicationCorrespondence& c);

/// Executed patch-pair comparisons per scale.
class ComparisonLedger {
 public:
  void record(int scale, std::uint64_t count = 1) { counts_[scale] += count; }
  std::uint64_t count(int scale) const;
  const std::map<int, std::uint64_t>& counts() const { return counts_; }

 private:
  std::map<int, std::uint64_t> counts_;
};

void validate_patch(const ScaleConfig& cfg, const PatchId& p);
Rect patch_rect(const ScaleConfig& cfg, const PatchId& p);

/// The four patches at scale - 1 that partition p, in row-major order.
std::array<PatchId, 4> children(const ScaleConfig& cfg, const PatchId& p);
PatchId parent(const ScaleConfig& cfg, const PatchId& p);

/// Pixels of patch `a` inside corr.src whose translated position lies inside
/// patch `b`. The image labels of a and b are not consulted.
long long exact_overlap(const ScaleConfig& cfg, const DuplicationCorrespondence& corr,
                        const PatchId& a, const PatchId& b);

/// All-pairs comparisons at a scale: (grid^2)^2.
std::uint64_t naive_budget(const ScaleConfig& cfg, int scale);
/// Comparisons made by the hierarchical search: the naive count at the top
/// scale, and 2 * grid(s + 1)^2 * 16 below it.
std::uint64_t ours_budget(const ScaleConfig& cfg, int scale);

}  // namespace monet
