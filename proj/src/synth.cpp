#include "monet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "monet/io.hpp"

namespace monet {

const ScaleAnnotations& AnnotationTemplate::at_scale(int scale) const {
  for (const auto& a : per_scale)
    if (a.scale == scale) return a;
  throw std::out_of_range("template " + id + " has no annotations at scale " +
                          std::to_string(scale));
}

AnnotationTemplate annotate(const ScaleConfig& cfg, const DuplicationCorrespondence& corr,
                            std::string id) {
  cfg.validate();
  corr.validate(cfg);
  AnnotationTemplate t;
  t.id = std::move(id);
  t.cfg_hash = config_hash(cfg);
  t.correspondence = corr;
  for (int s = cfg.top_scale; s >= cfg.min_scale; --s) {
    ScaleAnnotations sa{s, {}};
    const int d = cfg.patch_dim(s);
    const int g = cfg.grid_size(s);
    const int r_lo = corr.src.y / d, r_hi = (corr.src.y + corr.src.h - 1) / d;
    const int c_lo = corr.src.x / d, c_hi = (corr.src.x + corr.src.w - 1) / d;
    for (int r1 = r_lo; r1 <= r_hi; ++r1) {
      for (int c1 = c_lo; c1 <= c_hi; ++c1) {
        Rect moved = intersect({c1 * d, r1 * d, d, d}, corr.src);
        moved.x += corr.dx();
        moved.y += corr.dy();
        for (int r2 = moved.y / d; r2 <= std::min(g - 1, (moved.y + moved.h - 1) / d); ++r2) {
          for (int c2 = moved.x / d; c2 <= std::min(g - 1, (moved.x + moved.w - 1) / d); ++c2) {
            const long long o = intersect(moved, {c2 * d, r2 * d, d, d}).area();
            if (o > 0) sa.pairs.push_back({r1, c1, r2, c2, o});
          }
        }
      }
    }
    t.per_scale.push_back(std::move(sa));
  }
  return t;
}

AnnotationTemplate generate_template(const ScaleConfig& cfg, Rng& rng, int min_region,
                                     int max_region, std::string id) {
  cfg.validate();
  if (min_region < 1 || min_region > max_region)
    throw std::invalid_argument("generate_template: need 1 <= min_region <= max_region");
  if (max_region > cfg.image_size)
    throw std::invalid_argument("generate_template: region of " + std::to_string(max_region) +
                                " pixels exceeds image size " + std::to_string(cfg.image_size));
  const int n = cfg.image_size;
  const int w = static_cast<int>(rng.uniform_int(min_region, max_region));
  const int h = static_cast<int>(rng.uniform_int(min_region, max_region));
  DuplicationCorrespondence corr;
  corr.src = {static_cast<int>(rng.uniform_int(0, n - w)), static_cast<int>(rng.uniform_int(0, n - h)), w, h};
  corr.dst = {static_cast<int>(rng.uniform_int(0, n - w)), static_cast<int>(rng.uniform_int(0, n - h)), w, h};
  return annotate(cfg, corr, std::move(id));
}

nlohmann::json template_to_json(const AnnotationTemplate& t) {
  nlohmann::json per_scale = nlohmann::json::array();
  for (const auto& sa : t.per_scale) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : sa.pairs) pairs.push_back({p.r1, p.c1, p.r2, p.c2, p.overlap});
    per_scale.push_back({{"scale", sa.scale}, {"pairs", std::move(pairs)}});
  }
  return {{"id", t.id},
          {"cfg_hash", t.cfg_hash},
          {"correspondence", t.correspondence},
          {"per_scale", std::move(per_scale)}};
}

AnnotationTemplate template_from_json(const nlohmann::json& j) {
  AnnotationTemplate t;
  t.id = j.at("id").get<std::string>();
  t.cfg_hash = j.at("cfg_hash").get<std::string>();
  t.correspondence = j.at("correspondence").get<DuplicationCorrespondence>();
  for (const auto& sj : j.at("per_scale")) {
    ScaleAnnotations sa{sj.at("scale").get<int>(), {}};
    for (const auto& p : sj.at("pairs"))
      sa.pairs.push_back({p.at(0).get<int>(), p.at(1).get<int>(), p.at(2).get<int>(),
                          p.at(3).get<int>(), p.at(4).get<long long>()});
    t.per_scale.push_back(std::move(sa));
  }
  return t;
}

void save_template(const std::filesystem::path& path, const AnnotationTemplate& t) {
  write_file_atomic(path, template_to_json(t).dump() + "\n");
}

AnnotationTemplate load_template(const std::filesystem::path& path) {
  try {
    return template_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed template " + path.string() + ": " + e.what());
  }
}

namespace {

void check_image(const Tensor& img, std::size_t n, const char* what) {
  if (img.shape() != Shape{n, n, 3})
    throw std::invalid_argument(std::string(what) + ": expected image of shape " +
                                shape_to_string({n, n, 3}) + ", got " +
                                shape_to_string(img.shape()));
}

std::vector<std::uint8_t> rect_mask(std::size_t n, const Rect& r) {
  std::vector<std::uint8_t> m(n * n, 0);
  for (int y = r.y; y < r.y + r.h; ++y)
    for (int x = r.x; x < r.x + r.w; ++x) m[static_cast<std::size_t>(y) * n + static_cast<std::size_t>(x)] = 1;
  return m;
}

}  // namespace

SyntheticSample apply_template(const ScaleConfig& cfg, const AnnotationTemplate& t,
                               const Tensor& a, const Tensor& b) {
  const auto n = static_cast<std::size_t>(cfg.image_size);
  check_image(a, n, "apply_template");
  check_image(b, n, "apply_template");
  const auto& corr = t.correspondence;
  corr.validate(cfg);
  SyntheticSample s;
  s.image1 = a;
  s.image2 = b;
  for (int y = 0; y < corr.src.h; ++y)
    for (int x = 0; x < corr.src.w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        s.image2.at(static_cast<std::size_t>(corr.dst.y + y), static_cast<std::size_t>(corr.dst.x + x), c) =
            a.at(static_cast<std::size_t>(corr.src.y + y), static_cast<std::size_t>(corr.src.x + x), c);
  s.gt_mask1 = rect_mask(n, corr.src);
  s.gt_mask2 = rect_mask(n, corr.dst);
  s.template_id = t.id;
  s.manipulated = true;
  return s;
}

SyntheticSample make_negative_sample(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.rank() != 3)
    throw std::invalid_argument("make_negative_sample: images must share an [H, W, 3] shape");
  SyntheticSample s;
  s.image1 = a;
  s.image2 = b;
  s.gt_mask1.assign(a.dim(0) * a.dim(1), 0);
  s.gt_mask2.assign(a.dim(0) * a.dim(1), 0);
  s.manipulated = false;
  return s;
}

std::vector<Triplet> sample_triplets(const ScaleConfig& cfg, const AnnotationTemplate& t,
                                     int scale, int k, Rng& rng) {
  const auto& ann = t.at_scale(scale);
  if (ann.pairs.empty())
    throw std::invalid_argument("sample_triplets: template " + t.id +
                                " has no positive annotations at scale " + std::to_string(scale));
  const int g = cfg.grid_size(scale);
  const int cells = g * g;
  // partners[side][cell] -> (other cell, overlap), sorted by other cell.
  std::map<int, std::vector<std::pair<int, long long>>> partners[2];
  for (const auto& p : ann.pairs) {
    const int a = p.r1 * g + p.c1;
    const int b = p.r2 * g + p.c2;
    partners[0][a].emplace_back(b, p.overlap);
    partners[1][b].emplace_back(a, p.overlap);
  }
  std::vector<int> anchors[2];
  for (int side = 0; side < 2; ++side) {
    for (auto& [cell, list] : partners[side]) {
      std::sort(list.begin(), list.end());
      anchors[side].push_back(cell);
    }
  }

  auto to_patch = [&](int image, int cell) { return PatchId{image, scale, cell / g, cell % g}; };
  std::vector<Triplet> out;
  out.reserve(static_cast<std::size_t>(std::max(k, 0)));
  for (int i = 0; i < k; ++i) {
    const int side = static_cast<int>(rng.uniform_int(0, 1));
    const auto& pool = anchors[side];
    const int anchor = pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
    const auto& list = partners[side].at(anchor);

    auto best = list.front();
    for (const auto& e : list)
      if (e.second > best.second) best = e;

    Triplet tr;
    tr.scale = scale;
    tr.anchor = to_patch(side + 1, anchor);
    tr.positive = to_patch(2 - side, best.first);
    tr.o_plus = best.second;

    const int zero_pool = cells - static_cast<int>(list.size());
    if (zero_pool > 0) {
      int neg;
      do {
        neg = static_cast<int>(rng.uniform_int(0, cells - 1));
      } while (std::binary_search(list.begin(), list.end(), std::pair<int, long long>{neg, 0},
                                  [](const auto& x, const auto& y) { return x.first < y.first; }));
      tr.negative = to_patch(2 - side, neg);
      tr.o_minus = 0;
    } else {
      auto smallest = list.front();
      for (const auto& e : list)
        if (e.second < smallest.second) smallest = e;
      if (smallest.second >= tr.o_plus)
        throw std::runtime_error("sample_triplets: no patch with smaller overlap than the positive");
      tr.negative = to_patch(2 - side, smallest.first);
      tr.o_minus = smallest.second;
    }
    out.push_back(tr);
  }
  return out;
}

namespace {

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

void add_value_noise(Tensor& img, int n, int cell, double amplitude, Rng& rng) {
  const int lattice = n / cell + 2;
  std::vector<double> values(static_cast<std::size_t>(lattice * lattice * 3));
  for (auto& v : values) v = rng.uniform(-1.0, 1.0);
  for (int y = 0; y < n; ++y) {
    const double fy = static_cast<double>(y) / cell;
    const int y0 = static_cast<int>(fy);
    const double ty = smoothstep(fy - y0);
    for (int x = 0; x < n; ++x) {
      const double fx = static_cast<double>(x) / cell;
      const int x0 = static_cast<int>(fx);
      const double tx = smoothstep(fx - x0);
      for (int c = 0; c < 3; ++c) {
        auto v = [&](int yy, int xx) {
          return values[static_cast<std::size_t>((yy * lattice + xx) * 3 + c)];
        };
        const double top = v(y0, x0) * (1 - tx) + v(y0, x0 + 1) * tx;
        const double bot = v(y0 + 1, x0) * (1 - tx) + v(y0 + 1, x0 + 1) * tx;
        img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), static_cast<std::size_t>(c)) +=
            amplitude * (top * (1 - ty) + bot * ty);
      }
    }
  }
}

}  // namespace

Tensor procedural_image(int n, Rng& rng) {
  if (n < 4) throw std::invalid_argument("procedural_image: size must be >= 4");
  const auto un = static_cast<std::size_t>(n);
  Tensor img({un, un, 3});
  const double base[3] = {rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7)};
  for (std::size_t p = 0; p < un * un; ++p)
    for (std::size_t c = 0; c < 3; ++c) img[p * 3 + c] = base[c];
  add_value_noise(img, n, std::max(2, n / 4), 0.30, rng);
  add_value_noise(img, n, std::max(2, n / 8), 0.20, rng);
  add_value_noise(img, n, std::max(2, n / 16), 0.12, rng);
  add_value_noise(img, n, std::max(1, n / 32), 0.12, rng);

  const int blobs = static_cast<int>(rng.uniform_int(3, 7));
  for (int b = 0; b < blobs; ++b) {
    const double cx = rng.uniform(0, n), cy = rng.uniform(0, n);
    const double rx = rng.uniform(n / 16.0, n / 4.0), ry = rng.uniform(n / 16.0, n / 4.0);
    const double color[3] = {rng.uniform(), rng.uniform(), rng.uniform()};
    for (std::size_t y = 0; y < un; ++y) {
      for (std::size_t x = 0; x < un; ++x) {
        const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
        const double d = std::sqrt(dx * dx + dy * dy);
        if (d >= 1.0) continue;
        const double alpha = 0.8 * smoothstep(std::min(1.0, (1.0 - d) / 0.3));
        for (std::size_t c = 0; c < 3; ++c)
          img.at(y, x, c) = (1 - alpha) * img.at(y, x, c) + alpha * color[c];
      }
    }
  }
  for (auto& v : img.data()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

}  // namespace monet
