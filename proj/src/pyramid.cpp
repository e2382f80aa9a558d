#include "monet/pyramid.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace monet {

void ScaleConfig::validate() const {
  if (image_size < 2 || (image_size & (image_size - 1)) != 0)
    throw std::invalid_argument("image_size must be a power of two >= 2, got " +
                                std::to_string(image_size));
  if (min_scale < 1 || top_scale < min_scale)
    throw std::invalid_argument("scales must satisfy 1 <= min_scale <= top_scale");
  if ((1 << top_scale) > image_size)
    throw std::invalid_argument("top_scale " + std::to_string(top_scale) +
                                " leaves no grid for image_size " + std::to_string(image_size));
  const int div = 1 << (top_scale - 1);
  if (top_channels <= 0 || top_channels % div != 0)
    throw std::invalid_argument("top_channels must be a positive multiple of 2^(top_scale-1)");
}

int ScaleConfig::grid_size(int scale) const {
  if (scale < 0 || scale > top_scale) throw std::out_of_range("scale out of range");
  return image_size >> scale;
}

int ScaleConfig::patch_dim(int scale) const {
  if (scale < 0 || scale > top_scale) throw std::out_of_range("scale out of range");
  return 1 << scale;
}

int ScaleConfig::channels(int scale) const {
  if (scale == 0) return 3;
  if (scale < 0 || scale > top_scale) throw std::out_of_range("scale out of range");
  return top_channels >> (top_scale - scale);
}

void to_json(nlohmann::json& j, const ScaleConfig& cfg) {
  j = nlohmann::json{{"image_size", cfg.image_size},
                     {"top_scale", cfg.top_scale},
                     {"min_scale", cfg.min_scale},
                     {"top_channels", cfg.top_channels}};
}

void from_json(const nlohmann::json& j, ScaleConfig& cfg) {
  cfg.image_size = j.at("image_size").get<int>();
  cfg.top_scale = j.at("top_scale").get<int>();
  cfg.min_scale = j.value("min_scale", 1);
  cfg.top_channels = j.at("top_channels").get<int>();
  cfg.validate();
}

std::string config_hash(const ScaleConfig& cfg) {
  const std::string text = nlohmann::json(cfg).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Rect intersect(const Rect& a, const Rect& b) {
  const int x0 = std::max(a.x, b.x);
  const int y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.x + a.w, b.x + b.w);
  const int y1 = std::min(a.y + a.h, b.y + b.h);
  if (x1 <= x0 || y1 <= y0) return {x0, y0, 0, 0};
  return {x0, y0, x1 - x0, y1 - y0};
}

void DuplicationCorrespondence::validate(const ScaleConfig& cfg) const {
  const Rect image{0, 0, cfg.image_size, cfg.image_size};
  if (src.w < 1 || src.h < 1) throw std::invalid_argument("duplicated region must be non-empty");
  if (src.w != dst.w || src.h != dst.h)
    throw std::invalid_argument("source and destination rects must have equal size");
  if (intersect(src, image) != src || intersect(dst, image) != dst)
    throw std::invalid_argument("duplication rects must lie inside the image");
}

void to_json(nlohmann::json& j, const DuplicationCorrespondence& c) {
  j = nlohmann::json{{"src", {c.src.x, c.src.y, c.src.w, c.src.h}},
                     {"dst", {c.dst.x, c.dst.y, c.dst.w, c.dst.h}}};
}

void from_json(const nlohmann::json& j, DuplicationCorrespondence& c) {
  auto rect = [](const nlohmann::json& r) {
    return Rect{r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>(), r.at(3).get<int>()};
  };
  c.src = rect(j.at("src"));
  c.dst = rect(j.at("dst"));
}

std::uint64_t ComparisonLedger::count(int scale) const {
  auto it = counts_.find(scale);
  return it == counts_.end() ? 0 : it->second;
}

void validate_patch(const ScaleConfig& cfg, const PatchId& p) {
  if (p.image != 1 && p.image != 2)
    throw std::invalid_argument("patch image must be 1 or 2, got " + std::to_string(p.image));
  if (p.scale < 1 || p.scale > cfg.top_scale)
    throw std::out_of_range("patch scale " + std::to_string(p.scale) + " out of range");
  const int g = cfg.grid_size(p.scale);
  if (p.row < 0 || p.row >= g || p.col < 0 || p.col >= g)
    throw std::out_of_range("patch (" + std::to_string(p.row) + ", " + std::to_string(p.col) +
                            ") outside the " + std::to_string(g) + "x" + std::to_string(g) +
                            " grid at scale " + std::to_string(p.scale));
}

Rect patch_rect(const ScaleConfig& cfg, const PatchId& p) {
  validate_patch(cfg, p);
  const int d = cfg.patch_dim(p.scale);
  return {p.col * d, p.row * d, d, d};
}

std::array<PatchId, 4> children(const ScaleConfig& cfg, const PatchId& p) {
  validate_patch(cfg, p);
  if (p.scale <= 1) throw std::invalid_argument("children: patch is already at the finest scale");
  const int s = p.scale - 1;
  const int r = 2 * p.row;
  const int c = 2 * p.col;
  return {PatchId{p.image, s, r, c}, PatchId{p.image, s, r, c + 1},
          PatchId{p.image, s, r + 1, c}, PatchId{p.image, s, r + 1, c + 1}};
}

PatchId parent(const ScaleConfig& cfg, const PatchId& p) {
  validate_patch(cfg, p);
  if (p.scale >= cfg.top_scale) throw std::invalid_argument("parent: patch is at the top scale");
  return {p.image, p.scale + 1, p.row / 2, p.col / 2};
}

long long exact_overlap(const ScaleConfig& cfg, const DuplicationCorrespondence& corr,
                        const PatchId& a, const PatchId& b) {
  if (a.scale != b.scale)
    throw std::invalid_argument("exact_overlap: patches at different scales (" +
                                std::to_string(a.scale) + " vs " + std::to_string(b.scale) + ")");
  Rect moved = intersect(patch_rect(cfg, a), corr.src);
  if (moved.empty()) return 0;
  moved.x += corr.dx();
  moved.y += corr.dy();
  return intersect(moved, patch_rect(cfg, b)).area();
}

std::uint64_t naive_budget(const ScaleConfig& cfg, int scale) {
  const auto g = static_cast<std::uint64_t>(cfg.grid_size(scale));
  return g * g * g * g;
}

std::uint64_t ours_budget(const ScaleConfig& cfg, int scale) {
  if (!cfg.has_scale(scale))
    throw std::out_of_range("scale " + std::to_string(scale) + " not searched by this config");
  if (scale == cfg.top_scale) return naive_budget(cfg, scale);
  const auto g = static_cast<std::uint64_t>(cfg.grid_size(scale + 1));
  return 2 * g * g * 16;
}

}  // namespace monet
