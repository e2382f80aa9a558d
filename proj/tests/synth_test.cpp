#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <tuple>

#include "monet/synth.hpp"

using namespace monet;

namespace {

Tensor random_image(int n, Rng& rng) {
  Tensor t({static_cast<std::size_t>(n), static_cast<std::size_t>(n), 3});
  for (auto& v : t.data()) v = rng.uniform();
  return t;
}

using PairKey = std::tuple<int, int, int, int>;

std::map<PairKey, long long> as_map(const ScaleAnnotations& a) {
  std::map<PairKey, long long> m;
  for (const auto& p : a.pairs) m[{p.r1, p.c1, p.r2, p.c2}] = p.overlap;
  return m;
}

}  // namespace

TEST(Template, AnnotationsEqualOracleExhaustively) {
  const auto cfg = ScaleConfig::desk();
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    auto t = generate_template(cfg, rng, 8, 32, "t" + std::to_string(i));
    EXPECT_EQ(t.per_scale.front().scale, cfg.top_scale);
    for (int s = cfg.min_scale; s <= cfg.top_scale; ++s) {
      auto stored = as_map(t.at_scale(s));
      const int g = cfg.grid_size(s);
      std::size_t nonzero = 0;
      for (int a = 0; a < g * g; ++a)
        for (int b = 0; b < g * g; ++b) {
          const long long o = exact_overlap(cfg, t.correspondence, {1, s, a / g, a % g},
                                            {2, s, b / g, b % g});
          auto it = stored.find({a / g, a % g, b / g, b % g});
          if (o > 0) {
            ++nonzero;
            ASSERT_NE(it, stored.end());
            EXPECT_EQ(it->second, o);
          } else {
            EXPECT_EQ(it, stored.end());
          }
        }
      EXPECT_EQ(nonzero, stored.size());
    }
  }
}

TEST(Template, ParentEqualsSumOfChildren) {
  const auto cfg = ScaleConfig::desk();
  Rng rng(2);
  for (int i = 0; i < 10; ++i) {
    auto t = generate_template(cfg, rng, 8, 32, "t");
    for (int s = cfg.min_scale + 1; s <= cfg.top_scale; ++s) {
      auto child = as_map(t.at_scale(s - 1));
      for (const auto& p : t.at_scale(s).pairs) {
        long long sum = 0;
        for (int i1 = 0; i1 < 4; ++i1)
          for (int i2 = 0; i2 < 4; ++i2) {
            PairKey k{2 * p.r1 + i1 / 2, 2 * p.c1 + i1 % 2, 2 * p.r2 + i2 / 2, 2 * p.c2 + i2 % 2};
            if (auto it = child.find(k); it != child.end()) sum += it->second;
          }
        EXPECT_EQ(sum, p.overlap);
      }
      // and every positive child has a positive parent
      auto parents = as_map(t.at_scale(s));
      for (const auto& c : t.at_scale(s - 1).pairs)
        EXPECT_TRUE(parents.count({c.r1 / 2, c.c1 / 2, c.r2 / 2, c.c2 / 2}));
    }
  }
}

TEST(Template, BottomTotalsEqualArea) {
  const auto cfg = ScaleConfig::desk();
  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    auto t = generate_template(cfg, rng, 8, 32, "t");
    for (int s = cfg.min_scale; s <= cfg.top_scale; ++s) {
      long long sum = 0;
      for (const auto& p : t.at_scale(s).pairs) sum += p.overlap;
      EXPECT_EQ(sum, t.correspondence.src.area());
    }
  }
}

TEST(Template, AlignedHalfImageRegion) {
  const auto cfg = ScaleConfig::desk();
  auto t = annotate(cfg, {{0, 32, 32, 32}, {32, 0, 32, 32}}, "aligned");
  for (int s = cfg.min_scale; s <= cfg.top_scale; ++s) {
    const int d = cfg.patch_dim(s);
    std::size_t full = 0;
    for (const auto& p : t.at_scale(s).pairs) full += p.overlap == d * d;
    EXPECT_EQ(full, static_cast<std::size_t>((32 / d) * (32 / d)));
    EXPECT_EQ(full, t.at_scale(s).pairs.size());
  }
}

TEST(Template, FullImageIdentity) {
  const auto cfg = ScaleConfig::desk();
  Rng rng(4);
  auto t = generate_template(cfg, rng, 64, 64, "full");
  EXPECT_EQ(t.correspondence.src, (Rect{0, 0, 64, 64}));
  EXPECT_EQ(t.correspondence.dst, (Rect{0, 0, 64, 64}));
  for (const auto& a : t.per_scale) {
    const int d = cfg.patch_dim(a.scale);
    EXPECT_EQ(a.pairs.size(), static_cast<std::size_t>(cfg.grid_size(a.scale) * cfg.grid_size(a.scale)));
    for (const auto& p : a.pairs) {
      EXPECT_EQ(p.overlap, d * d);
      EXPECT_EQ(p.r1, p.r2);
      EXPECT_EQ(p.c1, p.c2);
    }
  }
}

TEST(Template, RegionSizeErrors) {
  const auto cfg = ScaleConfig::desk();
  Rng rng(5);
  EXPECT_THROW(generate_template(cfg, rng, 8, 65, "x"), std::invalid_argument);
  EXPECT_THROW(generate_template(cfg, rng, 20, 10, "x"), std::invalid_argument);
  EXPECT_THROW(generate_template(cfg, rng, 0, 10, "x"), std::invalid_argument);
}

TEST(Template, RecomputeAndSerializeRoundTrip) {
  const auto cfg = ScaleConfig::desk();
  Rng rng(6);
  auto t = generate_template(cfg, rng, 8, 32, "rt");
  auto again = annotate(cfg, t.correspondence, "rt");
  EXPECT_EQ(again.per_scale, t.per_scale);
  auto j = template_to_json(t);
  EXPECT_EQ(j.at("per_scale")[0].at("pairs")[0].size(), 5u);
  auto back = template_from_json(j);
  EXPECT_EQ(back.per_scale, t.per_scale);
  EXPECT_EQ(back.cfg_hash, config_hash(cfg));

  const auto path = std::filesystem::temp_directory_path() / "monet_synth_test_template.json";
  save_template(path, t);
  auto loaded = load_template(path);
  EXPECT_EQ(loaded.id, "rt");
  EXPECT_EQ(loaded.per_scale, t.per_scale);
  std::filesystem::remove(path);
}

TEST(Template, GenerationIsSeeded) {
  const auto cfg = ScaleConfig::desk();
  Rng a(7), b(7);
  auto ta = generate_template(cfg, a, 8, 32, "s");
  auto tb = generate_template(cfg, b, 8, 32, "s");
  EXPECT_EQ(ta.correspondence.src, tb.correspondence.src);
  EXPECT_EQ(ta.correspondence.dst, tb.correspondence.dst);
}

TEST(Apply, CopiesRegionAndSetsMasks) {
  const auto cfg = ScaleConfig::desk();
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    auto t = generate_template(cfg, rng, 8, 32, "t");
    Tensor a = random_image(64, rng), b = random_image(64, rng);
    auto s = apply_template(cfg, t, a, b);
    EXPECT_TRUE(s.manipulated);
    EXPECT_TRUE(s.image1.same_values(a));
    const auto& src = t.correspondence.src;
    const auto& dst = t.correspondence.dst;
    long long ones1 = 0, ones2 = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const bool in_src = src.contains(x, y), in_dst = dst.contains(x, y);
        ASSERT_EQ(s.gt_mask1[y * 64 + x], in_src ? 1 : 0);
        ASSERT_EQ(s.gt_mask2[y * 64 + x], in_dst ? 1 : 0);
        ones1 += in_src;
        ones2 += in_dst;
        for (int c = 0; c < 3; ++c) {
          if (in_dst) {
            ASSERT_EQ(s.image2.at(y, x, c), a.at(y - dst.y + src.y, x - dst.x + src.x, c));
          } else {
            ASSERT_EQ(s.image2.at(y, x, c), b.at(y, x, c));
          }
        }
      }
    long long bottom = 0;
    for (const auto& p : t.at_scale(cfg.min_scale).pairs) bottom += p.overlap;
    EXPECT_EQ(bottom, ones1);
    EXPECT_EQ(ones1, ones2);
  }
}

TEST(Apply, SameImageSameRect) {
  const auto cfg = ScaleConfig::desk();
  Rng rng(9);
  Tensor a = random_image(64, rng);
  auto t = annotate(cfg, {{5, 7, 20, 11}, {5, 7, 20, 11}}, "same");
  auto s = apply_template(cfg, t, a, a);
  EXPECT_TRUE(s.image2.same_values(a));
  std::size_t marked = 0;
  for (auto v : s.gt_mask2) marked += v;
  EXPECT_EQ(marked, 220u);
  EXPECT_THROW(apply_template(cfg, t, a, Tensor({32, 32, 3})), std::invalid_argument);
}

TEST(Negative, UntouchedAndEmpty) {
  Rng rng(10);
  Tensor a = random_image(16, rng), b = random_image(16, rng);
  auto s = make_negative_sample(a, b);
  EXPECT_FALSE(s.manipulated);
  EXPECT_TRUE(s.image1.same_values(a));
  EXPECT_TRUE(s.image2.same_values(b));
  for (auto v : s.gt_mask1) EXPECT_EQ(v, 0);
  for (auto v : s.gt_mask2) EXPECT_EQ(v, 0);
  EXPECT_EQ(s.gt_mask1.size(), 256u);
}

TEST(Triplets, OracleRecheck) {
  const auto cfg = ScaleConfig::desk();
  Rng rng(11);
  auto t = generate_template(cfg, rng, 8, 32, "t");
  for (int s = cfg.min_scale; s <= cfg.top_scale; ++s) {
    auto trips = sample_triplets(cfg, t, s, 1000, rng);
    ASSERT_EQ(trips.size(), 1000u);
    for (const auto& tr : trips) {
      EXPECT_EQ(tr.scale, s);
      EXPECT_NE(tr.anchor.image, tr.positive.image);
      EXPECT_EQ(tr.positive.image, tr.negative.image);
      auto overlap = [&](const PatchId& x) {
        return tr.anchor.image == 1 ? exact_overlap(cfg, t.correspondence, tr.anchor, x)
                                    : exact_overlap(cfg, t.correspondence, x, tr.anchor);
      };
      EXPECT_EQ(overlap(tr.positive), tr.o_plus);
      EXPECT_EQ(overlap(tr.negative), tr.o_minus);
      EXPECT_GT(tr.o_plus, tr.o_minus);
      EXPECT_GE(tr.o_minus, 0);
      EXPECT_LE(tr.o_plus, 1LL << (2 * s));
    }
  }
}

TEST(Triplets, FullImageTemplateHasFullPositives) {
  const auto cfg = ScaleConfig::desk();
  Rng rng(12);
  auto t = generate_template(cfg, rng, 64, 64, "full");
  for (const auto& tr : sample_triplets(cfg, t, 2, 200, rng)) {
    EXPECT_EQ(tr.o_plus, 16);
    EXPECT_EQ(tr.o_minus, 0);
  }
}

TEST(Triplets, FallbackWhenNoZeroOverlapPatch) {
  // 2x2 grid, region shifted by one pixel: the corner anchors touch every
  // patch of the other image, so their negative is the smallest-overlap one.
  ScaleConfig cfg{8, 2, 1, 8};
  auto t = annotate(cfg, {{0, 0, 7, 7}, {1, 1, 7, 7}}, "big");
  Rng rng(13);
  int fallback = 0;
  for (const auto& tr : sample_triplets(cfg, t, 2, 300, rng)) {
    EXPECT_GT(tr.o_plus, tr.o_minus);
    fallback += tr.o_minus > 0;
  }
  EXPECT_GT(fallback, 0);
}

TEST(Triplets, NoPositivesAtScaleThrows) {
  const auto cfg = ScaleConfig::desk();
  Rng rng(14);
  auto t = generate_template(cfg, rng, 8, 32, "t");
  t.per_scale.back().pairs.clear();
  EXPECT_THROW(sample_triplets(cfg, t, t.per_scale.back().scale, 5, rng), std::invalid_argument);
}

TEST(Procedural, RangeAndDeterminism) {
  Rng a(15), b(15);
  Tensor x = procedural_image(64, a), y = procedural_image(64, b);
  EXPECT_TRUE(x.same_values(y));
  EXPECT_EQ(x.shape(), (Shape{64, 64, 3}));
  double lo = 1, hi = 0;
  for (double v : x.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_GE(lo, 0.0);
  EXPECT_LE(hi, 1.0);
  EXPECT_GT(hi - lo, 0.1);
}
