// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
//   acceptance [--only A1,A4] [--work DIR]

#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>

#include "monet/app.hpp"
#include "monet/gradient_check.hpp"
#include "monet/io.hpp"

using namespace monet;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

double cpu_minutes() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC / 60.0; }

Tensor random_image(int n, Rng& rng) {
  Tensor t({static_cast<std::size_t>(n), static_cast<std::size_t>(n), 3});
  for (auto& v : t.data()) v = rng.uniform();
  return t;
}

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// ---------------------------------------------------------------------------

Outcome check_a1(const fs::path& work) {
  const auto start = std::chrono::steady_clock::now();
  const auto cfg = ScaleConfig::full_size();
  const std::uint64_t ours[] = {4096, 2048, 8192, 32768, 131072};
  const std::uint64_t naive[] = {4096, 65536, 1048576, 16777216, 268435456};
  const auto table = cmd_budget_table(cfg);
  bool ok = table.rows.size() == 5;
  for (std::size_t i = 0; ok && i < 5; ++i)
    ok = table.rows[i].scale == 5 - static_cast<int>(i) && table.rows[i].ours == ours[i] &&
         table.rows[i].naive == naive[i];
  const auto parsed = parse_budget_csv(table.to_csv());
  for (std::size_t i = 0; ok && i < 5; ++i) ok = parsed.rows[i].ours == ours[i] && parsed.rows[i].naive == naive[i];

  // A real detect run at N = 256 through PNG files.
  Rng rng(11);
  const auto dir = work / "a1";
  fs::create_directories(dir);
  write_png_rgb(dir / "image1.png", procedural_image(256, rng));
  write_png_rgb(dir / "image2.png", procedural_image(256, rng));
  ModelConfig mc;
  mc.scales = cfg;
  mc.init_seed = 11;
  const Model model(mc);
  const auto r = cmd_detect(model, dir / "image1.png", dir / "image2.png", dir / "detect");
  std::string executed;
  for (std::size_t i = 0; i < r.ledger.rows.size(); ++i) {
    ok = ok && r.ledger.rows[i].executed == ours[i];
    executed += (i ? "," : "") + std::to_string(r.ledger.rows[i].executed);
  }
  ok = ok && r.ledger.passed() && r.ledger.rows.size() == 5;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ok = ok && secs < 60.0;
  return {ok, "table exact; detect ledger {" + executed + "}; " + fmt(secs, 1) + " s"};
}

Outcome check_a2() {
  struct Case {
    double x1, x2, m, expected;
  };
  struct Flex {
    double x1, x2;
    long long op, om;
    int d;
    double expected;
  };
  // Hand-computed from max(0, (x2 - x1) + m) and (o+ - o-) / d^2.
  const Case regular[] = {{0.9, 0.1, 0.5, 0.0},  {0.5, 0.5, 0.5, 0.5},   {0.2, 0.6, 0.3, 0.7},
                          {0.7, 0.2, 0.5, 0.0},  {0.6, 0.2, 0.5, 0.1},   {0.0, 1.0, 0.5, 1.5},
                          {1.0, 0.0, 0.5, 0.0},  {0.3, 0.3, 0.0, 0.0},   {0.25, 0.75, 0.25, 0.75},
                          {0.4, 0.1, 1.0, 0.7},  {0.8, 0.8, 0.2, 0.2}};
  const Flex flexible[] = {{0.5, 0.5, 64, 0, 8, 1.0},    {0.5, 0.5, 48, 16, 8, 0.5},
                           {0.9, 0.1, 48, 16, 8, 0.0},   {0.3, 0.4, 1, 0, 32, 0.1 + 1.0 / 1024},
                           {0.6, 0.2, 1024, 0, 32, 0.6}, {2.0, 0.5, 4, 0, 2, 0.0},
                           {0.1, 0.9, 2, 1, 2, 1.05},    {0.5, 0.25, 16, 4, 4, 0.5},
                           {0.75, 0.5, 3, 1, 2, 0.25}};
  int cases = 0, bad = 0;
  double worst = 0.0;
  for (const auto& c : regular) {
    const double err = std::abs(margin_rank_loss(c.x1, c.x2, c.m) - c.expected);
    worst = std::max(worst, err);
    bad += err > 1e-12;
    ++cases;
  }
  for (const auto& c : flexible) {
    const double err = std::abs(flexible_margin_loss(c.x1, c.x2, c.op, c.om, c.d) - c.expected);
    worst = std::max(worst, err);
    bad += err > 1e-12;
    ++cases;
  }
  const std::tuple<long long, long long, int, double> margins[] = {
      {64, 0, 8, 1.0}, {48, 16, 8, 0.5}, {1, 0, 32, 1.0 / 1024}, {3, 1, 2, 0.5}};
  for (const auto& [op, om, d, expected] : margins) {
    bad += std::abs(flexible_margin(op, om, d) - expected) > 1e-12;
    ++cases;
  }
  // BCE at p = 0.5 is ln 2.
  bad += std::abs(bce_loss(Tensor({4, 4, 1}, 0.5), Tensor({4, 4, 1}, 1.0)) - std::log(2.0)) > 1e-12;
  ++cases;

  Rng rng(2);
  int hinge_bad = 0;
  for (int i = 0; i < 10000; ++i) {
    const double x1 = rng.uniform(), x2 = rng.uniform(), m = rng.uniform();
    const double loss = margin_rank_loss(x1, x2, m);
    hinge_bad += (loss == 0.0) != (x1 - x2 >= m) || loss < 0.0;
  }
  return {cases >= 20 && bad == 0 && hinge_bad == 0,
          std::to_string(cases) + " hand cases, " + std::to_string(bad) + " off (max err " +
              fmt(worst, 16) + "); hinge-zero violations " + std::to_string(hinge_bad) + "/10000"};
}

// Detector score on one triplet's (anchor, partner) pair, image 1 first.
double pair_score(const Model& model, const FeatureMaps& f1, const FeatureMaps& f2, const Triplet& t,
                  const PatchId& partner) {
  const auto& det = model.detector(t.scale);
  const auto c = static_cast<std::size_t>(det.channels());
  const int g = model.scales().grid_size(t.scale);
  const PatchId& p1 = t.anchor.image == 1 ? t.anchor : partner;
  const PatchId& p2 = t.anchor.image == 1 ? partner : t.anchor;
  const auto u1 = static_cast<std::size_t>(p1.row * g + p1.col), u2 = static_cast<std::size_t>(p2.row * g + p2.col);
  return det.score(f1.at(t.scale).data().subspan(u1 * c, c), f2.at(t.scale).data().subspan(u2 * c, c));
}

struct Training {
  RunConfig cfg;
  TemplateSplit split;
  std::optional<PhaseResult> pretrained;
  double pretrain_cpu_min = 0.0;
  std::optional<PhaseResult> trained;
  std::optional<EvalReport> full_report;
  std::vector<SyntheticSample> test;
};

void ensure_pretrained(Training& t, const fs::path& work) {
  if (t.pretrained) return;
  t.cfg = RunConfig::desk();
  t.cfg.seed = 7;
  t.cfg.templates_dir = (work / "templates").string();
  t.cfg.out_dir = (work / "full").string();
  gen_templates(t.cfg, t.cfg.template_count, t.cfg.templates_dir);
  t.split = load_templates(t.cfg, t.cfg.templates_dir);
  const double before = cpu_minutes();
  t.pretrained = cmd_pretrain(t.cfg, t.cfg.out_dir, std::nullopt, &std::cerr);
  t.pretrain_cpu_min = cpu_minutes() - before;
}

Outcome check_a3(Training& t, const fs::path& work) {
  ensure_pretrained(t, work);
  const auto& cfg = t.cfg;
  const SyntheticStream held(cfg.scales, t.split.heldout);
  const auto val = validation_triplets(cfg, held);
  const Model& model = t.pretrained->model;
  double pos = 0.0, neg = 0.0;
  std::size_t npos = 0, nneg = 0;
  for (const auto& item : val) {
    const auto f1 = encode(model, item.sample.image1), f2 = encode(model, item.sample.image2);
    for (const auto& tr : item.triplets) {
      const int d = cfg.scales.patch_dim(tr.scale);
      if (tr.o_plus == static_cast<long long>(d) * d) {
        pos += pair_score(model, f1, f2, tr, tr.positive);
        ++npos;
      }
      if (tr.o_minus == 0) {
        neg += pair_score(model, f1, f2, tr, tr.negative);
        ++nneg;
      }
    }
  }
  pos /= static_cast<double>(std::max<std::size_t>(npos, 1));
  neg /= static_cast<double>(std::max<std::size_t>(nneg, 1));
  const auto& m = t.pretrained->metrics;
  const double first = m.front().val_rank_loss, last = m.back().val_rank_loss;
  const double drop = 1.0 - last / first;
  const double gap = pos - neg;
  const bool ok = npos > 0 && nneg > 0 && gap >= cfg.train.margin && drop >= 0.5 &&
                  m.size() == 25 && t.pretrain_cpu_min <= 30.0;
  return {ok, "held-out pos(o+=d^2) " + fmt(pos) + " [n=" + std::to_string(npos) + "] - neg(o-=0) " +
                  fmt(neg) + " [n=" + std::to_string(nneg) + "] = " + fmt(gap) + " (need >= " +
                  fmt(cfg.train.margin, 2) + "); val loss " + fmt(first) + " -> " + fmt(last) +
                  " drop " + fmt(100 * drop, 1) + "% (need >= 50%); " + fmt(t.pretrain_cpu_min, 1) +
                  " CPU-min"};
}

void ensure_trained(Training& t, const fs::path& work) {
  ensure_pretrained(t, work);
  if (t.trained) return;
  t.trained = cmd_train(t.cfg, t.cfg.out_dir, t.pretrained->checkpoint, &std::cerr);
  const SyntheticStream held(t.cfg.scales, t.split.heldout);
  t.test = test_pairs(t.cfg, held);
  t.full_report = evaluate_samples(t.trained->model, t.test, t.cfg.threshold, t.cfg.area_threshold());
}

Outcome check_a4(Training& t, const fs::path& work) {
  ensure_trained(t, work);
  const auto& r = *t.full_report;
  int positives = 0;
  for (const auto& s : t.test) positives += s.manipulated;
  const bool ok = r.pixel_mcc() >= 0.8 && r.image_mcc() >= 0.9 && t.test.size() == 200 && positives == 100;
  return {ok, "pixel MCC " + fmt(r.pixel_mcc()) + " (need >= 0.8), image MCC " + fmt(r.image_mcc()) +
                  " (need >= 0.9) on " + std::to_string(t.test.size()) + " pairs, " +
                  std::to_string(positives) + " manipulated"};
}

Outcome check_a5(Training& t, const fs::path& work) {
  ensure_trained(t, work);
  std::vector<std::pair<std::string, EvalReport>> reports = {{"full", *t.full_report}};
  for (auto mode : {AblationMode::no_gating, AblationMode::dot_product}) {
    RunConfig v = t.cfg;
    v.mode = mode;
    v.out_dir = (work / std::string(to_string(mode))).string();
    auto pre = cmd_pretrain(v, v.out_dir, std::nullopt, &std::cerr);
    auto trained = cmd_train(v, v.out_dir, pre.checkpoint, &std::cerr);
    reports.emplace_back(std::string(to_string(mode)),
                         evaluate_samples(trained.model, t.test, v.threshold, v.area_threshold()));
  }
  const auto table = compare_variants(reports);
  write_file_atomic(work / "ablation.csv", table.to_csv());
  const double full = reports[0].second.pixel_mcc(), gate = reports[1].second.pixel_mcc(),
               dot = reports[2].second.pixel_mcc();
  return {full >= gate && gate > dot, "pixel MCC full " + fmt(full) + ", no_gating " + fmt(gate) +
                                          ", dot_product " + fmt(dot) + " (need full >= no_gating > dot_product)"};
}

Outcome check_a6() {
  const auto cfg = ScaleConfig::desk();
  const int top = cfg.patch_dim(cfg.top_scale), g_top = cfg.grid_size(cfg.top_scale);
  const int s = cfg.min_scale, g = cfg.grid_size(s), area = cfg.patch_dim(s) * cfg.patch_dim(s);
  Rng rng(6);
  int equal = 0, total = 0;
  std::size_t marked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int w = top * static_cast<int>(rng.uniform_int(1, g_top / 2));
    const int h = top * static_cast<int>(rng.uniform_int(1, g_top / 2));
    auto pos = [&](int len) { return top * static_cast<int>(rng.uniform_int(0, g_top - len / top)); };
    DuplicationCorrespondence corr{{pos(w), pos(h), w, h}, {pos(w), pos(h), w, h}};

    auto oracle = [&](const CandidateSet& cands) {
      std::vector<double> scores;
      scores.reserve(cands.pairs.size());
      for (const auto& p : cands.pairs)
        scores.push_back(static_cast<double>(exact_overlap(cfg, corr, {1, cands.scale, p.p1 / cands.grid, p.p1 % cands.grid},
                                                           {2, cands.scale, p.p2 / cands.grid, p.p2 % cands.grid})) /
                         cfg.patch_dim(cands.scale) / cfg.patch_dim(cands.scale));
      return reduce_max(cands, scores);
    };
    const auto maps = hierarchical_search(cfg, oracle);
    const auto& bottom = maps.at(s);
    std::set<std::pair<int, int>> hier;
    for (int p = 0; p < g * g; ++p) {
      if (bottom.o1[p] == 1.0) hier.insert({p, bottom.partner1[p]});
      if (bottom.o2[p] == 1.0) hier.insert({bottom.partner2[p], p});
    }

    // Exhaustive: every bottom-scale pair scored, then the same per-patch max.
    CandidateSet all{s, g, {}};
    all.pairs.reserve(static_cast<std::size_t>(g) * g * g * g);
    for (int a = 0; a < g * g; ++a)
      for (int b = 0; b < g * g; ++b) all.pairs.push_back({a, b});
    const auto full = oracle(all);
    std::set<std::pair<int, int>> exhaustive;
    for (int p = 0; p < g * g; ++p) {
      if (full.o1[p] == 1.0) exhaustive.insert({p, full.partner1[p]});
      if (full.o2[p] == 1.0) exhaustive.insert({full.partner2[p], p});
    }
    // Cross-check the exhaustive set against the geometry directly.
    std::size_t geometric = 0;
    for (int a = 0; a < g * g; ++a)
      geometric += intersect(patch_rect(cfg, {1, s, a / g, a % g}), corr.src).area() == area;
    equal += hier == exhaustive && exhaustive.size() == geometric;
    marked += exhaustive.size();
    ++total;
  }
  return {equal == total, std::to_string(equal) + "/" + std::to_string(total) +
                              " aligned correspondences give identical bottom-scale sets (" +
                              std::to_string(marked) + " pairs)"};
}

Outcome check_a7() {
  int layer_fail = 0, layer_runs = 0;
  double layer_worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    std::vector<std::pair<std::vector<Layer>, Tensor>> cases;
    cases.push_back({{Layer::conv2d(2, 3, 3, 1, rng)}, random_tensor({5, 5, 2}, rng)});
    cases.push_back({{Layer::conv2d(3, 2, 3, 2, rng)}, random_tensor({6, 6, 3}, rng)});
    cases.push_back({{Layer::conv2d(3, 2, 2, 2, rng)}, random_tensor({6, 6, 3}, rng)});
    cases.push_back({{Layer::dense(4, 3, rng)}, random_tensor({2, 4}, rng)});
    Tensor r = random_tensor({10}, rng);
    for (auto& v : r.data()) v += v >= 0 ? 0.1 : -0.1;
    cases.push_back({{Layer::relu()}, r});
    cases.push_back({{Layer::sigmoid()}, random_tensor({3, 3, 2}, rng, -4, 4)});
    cases.push_back({{Layer::upsample2x()}, random_tensor({3, 2, 2}, rng)});
    for (auto& [net, x] : cases) {
      auto rep = gradient_check(net, x, 1e-4, seed + 1);
      layer_fail += !rep.passed();
      layer_worst = std::max(layer_worst, rep.max_rel_error());
      ++layer_runs;
    }
    Tensor a = random_tensor({3, 3, 2}, rng), b = random_tensor({3, 3, 1}, rng);
    Tensor head = random_tensor({3, 3, 3}, rng);
    auto loss = [&] {
      const Tensor y = apply_layer(Layer::concat_channels(), a, b);
      double sum = 0;
      for (std::size_t i = 0; i < y.size(); ++i) sum += head[i] * y[i];
      return sum;
    };
    auto [ga, gb] = backprop_concat(a, b, head);
    auto rep = compare_with_finite_differences({{"a", a.data(), ga.data()}, {"b", b.data(), gb.data()}}, loss, 1e-4);
    layer_fail += !rep.passed();
    layer_worst = std::max(layer_worst, rep.max_rel_error());
    ++layer_runs;
  }

  int pipe_fail = 0;
  double pipe_worst = 0.0;
  std::size_t checked = 0, skipped = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Model model({{16, 2, 1, 8}, 6, 3, AblationMode::full, seed});
    Rng rng(300 + seed);
    for (auto& [name, t] : model.named_parameters()) {
      if (!name.ends_with("bias")) continue;
      const bool enc = name.starts_with("encoder");
      for (auto& v : t->data())
        v = enc ? rng.uniform(0.5, 1.0) : rng.uniform(0.05, 0.3) * (rng.uniform() < 0.5 ? 1 : -1);
    }
    for (int s = 1; s <= 2; ++s)
      for (auto& v : model.detector(s).output_layer().weight().data()) v = rng.uniform(-1, 1);
    const Tensor a = random_image(16, rng), b = random_image(16, rng);
    const Tensor h1 = random_tensor({16, 16, 1}, rng), h2 = random_tensor({16, 16, 1}, rng);
    PipelineTrace trace;
    auto out = run_pipeline(model, a, b, {&trace, nullptr});
    model.zero_grad();
    backward_pipeline(model, trace, out, h1, h2);
    auto loss = [&] {
      const auto o = run_pipeline(model, a, b, {nullptr, &out});
      double sum = 0;
      for (std::size_t i = 0; i < h1.size(); ++i) sum += h1[i] * o.mask1[i] + h2[i] * o.mask2[i];
      return sum;
    };
    std::vector<CheckedBlock> blocks;
    for (auto& [name, t] : model.named_parameters()) blocks.push_back({name, t->data(), t->grad()});
    auto rep = compare_with_finite_differences(blocks, loss, 1e-3, 1e-5, true);
    pipe_fail += !rep.passed() || rep.nonsmooth() * 200 >= rep.checked();
    pipe_worst = std::max(pipe_worst, rep.max_rel_error());
    checked += rep.checked();
    skipped += rep.nonsmooth();
  }
  return {layer_fail == 0 && pipe_fail == 0,
          "layers " + std::to_string(layer_runs - layer_fail) + "/" + std::to_string(layer_runs) +
              " (max rel err " + fmt(layer_worst, 8) + " <= 1e-4); pipeline " +
              std::to_string(20 - pipe_fail) + "/20 seeds (max rel err " + fmt(pipe_worst, 6) +
              " <= 1e-3, " + std::to_string(checked) + " elements, " + std::to_string(skipped) +
              " at ReLU kinks skipped)"};
}

Outcome check_a8() {
  const auto cfg = ScaleConfig::desk();
  Rng rng(8);
  int oracle_bad = 0, parent_bad = 0, mask_bad = 0;
  for (int i = 0; i < 100; ++i) {
    const auto t = generate_template(cfg, rng, cfg.image_size / 8, cfg.image_size / 2, "a8-" + std::to_string(i));
    std::map<int, std::map<std::tuple<int, int, int, int>, long long>> stored;
    for (const auto& sa : t.per_scale)
      for (const auto& p : sa.pairs) stored[sa.scale][{p.r1, p.c1, p.r2, p.c2}] = p.overlap;
    for (int s = cfg.min_scale; s <= cfg.top_scale; ++s) {
      const int g = cfg.grid_size(s);
      std::size_t nonzero = 0;
      for (int a = 0; a < g * g; ++a)
        for (int b = 0; b < g * g; ++b) {
          const long long o = exact_overlap(cfg, t.correspondence, {1, s, a / g, a % g}, {2, s, b / g, b % g});
          const auto it = stored[s].find({a / g, a % g, b / g, b % g});
          if (o > 0) {
            ++nonzero;
            oracle_bad += it == stored[s].end() || it->second != o;
          } else {
            oracle_bad += it != stored[s].end();
          }
        }
      oracle_bad += nonzero != stored[s].size();
      if (s > cfg.min_scale)
        for (const auto& [k, o] : stored[s]) {
          const auto [r1, c1, r2, c2] = k;
          long long sum = 0;
          for (int i1 = 0; i1 < 4; ++i1)
            for (int i2 = 0; i2 < 4; ++i2) {
              const auto it = stored[s - 1].find({2 * r1 + i1 / 2, 2 * c1 + i1 % 2, 2 * r2 + i2 / 2, 2 * c2 + i2 % 2});
              if (it != stored[s - 1].end()) sum += it->second;
            }
          parent_bad += sum != o;
        }
    }
    const auto sample = apply_template(cfg, t, random_image(cfg.image_size, rng), random_image(cfg.image_size, rng));
    long long total = 0;
    for (const auto& [k, o] : stored[cfg.min_scale]) total += o;
    long long pop1 = 0, pop2 = 0;
    for (auto v : sample.gt_mask1) pop1 += v;
    for (auto v : sample.gt_mask2) pop2 += v;
    mask_bad += total != pop1 || total != pop2 || total != t.correspondence.src.area();
  }
  return {oracle_bad == 0 && parent_bad == 0 && mask_bad == 0,
          "100 templates: oracle mismatches " + std::to_string(oracle_bad) + ", parent/children mismatches " +
              std::to_string(parent_bad) + ", mask-area mismatches " + std::to_string(mask_bad)};
}

Outcome check_a9() {
  auto reference = [](std::uint64_t tp, std::uint64_t tn, std::uint64_t fp, std::uint64_t fn) {
    const long double a = tp + fp, b = tp + fn, c = tn + fp, d = tn + fn;
    if (a == 0 || b == 0 || c == 0 || d == 0) return 0.0;
    const long double num = static_cast<long double>(tp) * tn - static_cast<long double>(fp) * fn;
    return static_cast<double>(num / std::sqrt(a * b * c * d));
  };
  Rng rng(9);
  int bad = 0, degenerate = 0;
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    std::uint64_t v[4];
    for (auto& x : v) {
      const double r = rng.uniform();
      x = r < 0.15 ? 0 : static_cast<std::uint64_t>(rng.uniform_int(0, r < 0.5 ? 20 : 5000000));
    }
    const ConfusionCounts c{v[0], v[1], v[2], v[3]};
    const double ref = reference(v[0], v[1], v[2], v[3]);
    const bool zero_den = v[0] + v[2] == 0 || v[0] + v[3] == 0 || v[1] + v[2] == 0 || v[1] + v[3] == 0;
    degenerate += zero_den;
    const double err = std::abs(mcc(c) - ref);
    worst = std::max(worst, err);
    bad += err > 1e-12 || (zero_den && mcc(c) != 0.0);
  }
  EvalItem a{"a", "", {1, 0}, {1, 0}, true}, b{"b", "", {1, 1}, {1, 0}, true};
  const std::vector<EvalItem> items = {a, b};
  const double joint = evaluate_pixel(items).mcc;
  const double mean = (evaluate_pixel(std::span(items).subspan(0, 1)).mcc +
                       evaluate_pixel(std::span(items).subspan(1, 1)).mcc) / 2.0;
  const bool aggregate = evaluate_pixel(items).counts == ConfusionCounts{2, 1, 1, 0} &&
                         std::abs(joint - reference(2, 1, 1, 0)) < 1e-15 && mean == 0.5 && joint != mean;
  return {bad == 0 && degenerate > 0 && aggregate,
          "1000 cases (" + std::to_string(degenerate) + " zero-denominator), max err " + fmt(worst, 16) +
              "; two-image aggregate " + fmt(joint) + " vs per-image mean " + fmt(mean)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria A1-A9"};
  std::string only, work = "acceptance_work";
  app.add_option("--only", only, "Comma-separated subset, e.g. A1,A6");
  app.add_option("--work", work, "Scratch directory for templates, checkpoints and reports");
  CLI11_PARSE(app, argc, argv);

  std::set<std::string> wanted;
  std::stringstream ss(only);
  for (std::string id; std::getline(ss, id, ',');)
    if (!id.empty()) wanted.insert(id);
  const fs::path dir = work;
  fs::create_directories(dir);

  Training training;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"A1", [&] { return check_a1(dir); }},
      {"A2", [] { return check_a2(); }},
      {"A3", [&] { return check_a3(training, dir); }},
      {"A4", [&] { return check_a4(training, dir); }},
      {"A5", [&] { return check_a5(training, dir); }},
      {"A6", [] { return check_a6(); }},
      {"A7", [] { return check_a7(); }},
      {"A8", [] { return check_a8(); }},
      {"A9", [] { return check_a9(); }},
  };
  int failures = 0;
  for (const auto& [id, run] : criteria) {
    if (!wanted.empty() && !wanted.count(id)) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
  }
  return failures ? 1 : 0;
}
