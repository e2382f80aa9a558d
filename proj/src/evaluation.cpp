#include "monet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace monet {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  tn += o.tn;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

void to_json(nlohmann::json& j, const ConfusionCounts& c) {
  j = {{"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}};
}

void from_json(const nlohmann::json& j, ConfusionCounts& c) {
  c.tp = j.at("tp").get<std::uint64_t>();
  c.tn = j.at("tn").get<std::uint64_t>();
  c.fp = j.at("fp").get<std::uint64_t>();
  c.fn = j.at("fn").get<std::uint64_t>();
}

double mcc(const ConfusionCounts& c) {
  const auto tp = static_cast<long double>(c.tp), tn = static_cast<long double>(c.tn);
  const auto fp = static_cast<long double>(c.fp), fn = static_cast<long double>(c.fn);
  const long double a = tp + fp, b = tp + fn, d = tn + fp, e = tn + fn;
  if (a == 0 || b == 0 || d == 0 || e == 0) return 0.0;
  const long double r = (tp * tn - fp * fn) / std::sqrt(a * b * d * e);
  return static_cast<double>(std::clamp(r, -1.0L, 1.0L));
}

ConfusionCounts count_pixels(std::span<const std::uint8_t> predicted,
                             std::span<const std::uint8_t> truth) {
  if (predicted.size() != truth.size())
    throw std::invalid_argument("count_pixels: predicted mask has " +
                                std::to_string(predicted.size()) + " pixels, ground truth " +
                                std::to_string(truth.size()));
  ConfusionCounts c;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i] != 0, t = truth[i] != 0;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

MetricResult evaluate_pixel(std::span<const EvalItem> items) {
  MetricResult r;
  for (const auto& it : items) {
    if (it.predicted.size() != it.truth.size())
      throw std::invalid_argument("evaluate_pixel: mask size mismatch for sample '" + it.name +
                                  "' (" + std::to_string(it.predicted.size()) + " vs " +
                                  std::to_string(it.truth.size()) + ")");
    r.counts += count_pixels(it.predicted, it.truth);
  }
  r.mcc = mcc(r.counts);
  return r;
}

MetricResult evaluate_image(std::span<const EvalItem> items, std::uint64_t min_area) {
  if (min_area < 1) throw std::invalid_argument("evaluate_image: min_area must be >= 1");
  MetricResult r;
  for (const auto& it : items) {
    const auto area = static_cast<std::uint64_t>(
        std::count_if(it.predicted.begin(), it.predicted.end(), [](auto v) { return v != 0; }));
    const bool p = area >= min_area;
    if (p && it.label) ++r.counts.tp;
    else if (p) ++r.counts.fp;
    else if (it.label) ++r.counts.fn;
    else ++r.counts.tn;
  }
  r.mcc = mcc(r.counts);
  return r;
}

std::uint64_t default_min_area(int image_size) {
  const double side = image_size / 64.0;
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(side * side)));
}

EvalReport evaluate(std::span<const EvalItem> items, std::uint64_t min_area) {
  EvalReport rep;
  rep.min_area = min_area;
  rep.pixel = evaluate_pixel(items);
  rep.image = evaluate_image(items, min_area);
  std::map<std::string, std::vector<EvalItem>> groups;
  for (const auto& it : items)
    groups[it.category.empty() ? "uncategorized" : it.category].push_back(it);
  for (const auto& [name, group] : groups)
    rep.categories[name] = {evaluate_pixel(group), evaluate_image(group, min_area)};
  return rep;
}

namespace {

nlohmann::json metric_json(const MetricResult& m) {
  return {{"mcc", m.mcc}, {"counts", m.counts}};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json cats = nlohmann::json::object();
  for (const auto& [name, m] : categories)
    cats[name] = {{"pixel", metric_json(m.pixel)}, {"image", metric_json(m.image)}};
  return {{"pixel_mcc", pixel.mcc},
          {"image_mcc", image.mcc},
          {"min_area", min_area},
          {"pixel", metric_json(pixel)},
          {"image", metric_json(image)},
          {"categories", cats}};
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "category,image_mcc,pixel_mcc,images,pixels\n";
  auto row = [&](const std::string& name, const MetricResult& px, const MetricResult& im) {
    os << name << ',' << fmt(im.mcc) << ',' << fmt(px.mcc) << ',' << im.counts.total() << ','
       << px.counts.total() << '\n';
  };
  row("all", pixel, image);
  for (const auto& [name, m] : categories) row(name, m.pixel, m.image);
  return os.str();
}

std::string VariantTable::to_csv() const {
  std::ostringstream os;
  os << "variant,image_mcc,pixel_mcc\n";
  for (const auto& r : rows) os << r.variant << ',' << fmt(r.image_mcc) << ',' << fmt(r.pixel_mcc) << '\n';
  return os.str();
}

VariantTable compare_variants(const std::vector<std::pair<std::string, EvalReport>>& reports) {
  if (reports.size() < 2)
    throw std::invalid_argument("compare_variants: need at least two reports");
  VariantTable t;
  for (const auto& [name, rep] : reports) t.rows.push_back({name, rep.image.mcc, rep.pixel.mcc});
  std::stable_sort(t.rows.begin(), t.rows.end(),
                   [](const VariantRow& a, const VariantRow& b) { return a.pixel_mcc > b.pixel_mcc; });
  return t;
}

}  // namespace monet
