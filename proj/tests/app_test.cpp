#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include "monet/app.hpp"
#include "monet/io.hpp"

using namespace monet;

namespace {

RunConfig tiny(const fs::path& root) {
  RunConfig c = RunConfig::desk();
  c.scales = {16, 2, 1, 8};
  c.detector_hidden = 8;
  c.decoder_channels = 3;
  c.template_count = 10;
  c.train.pretrain_epochs = 2;
  c.train.e2e_epochs = 2;
  c.train.triplets_per_scale = 20;
  c.train.val_triplets_per_scale = 10;
  c.train.e2e_pairs = 6;
  c.train.val_pairs = 4;
  c.test_pairs = 6;
  c.templates_dir = (root / "tpl").string();
  c.out_dir = (root / "run").string();
  return c;
}

class AppTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("monet_app_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }
  fs::path root_;
};

std::string slurp(const fs::path& p) { return read_file(p); }

}  // namespace

TEST(RunConfigJson, RoundTripAndPartialOverride) {
  RunConfig c = RunConfig::desk();
  c.seed = 99;
  c.mode = AblationMode::no_gating;
  c.images = "imgs";
  nlohmann::json j = c;
  auto back = j.get<RunConfig>();
  EXPECT_EQ(nlohmann::json(back), j);

  auto partial = nlohmann::json::parse(R"({"seed": 3, "train": {"lr": 0.01}})").get<RunConfig>();
  EXPECT_EQ(partial.seed, 3u);
  EXPECT_EQ(partial.train.lr, 0.01);
  EXPECT_EQ(partial.train.batch_size, RunConfig::desk().train.batch_size);
  EXPECT_EQ(partial.scales, ScaleConfig::desk());
  EXPECT_EQ(partial.region_min(), 8);
  EXPECT_EQ(partial.region_max(), 32);
  EXPECT_EQ(partial.area_threshold(), 1u);

  EXPECT_THROW(nlohmann::json::parse(R"({"templates": {"holdout_fraction": 1.0}})").get<RunConfig>(),
               std::invalid_argument);
  EXPECT_THROW(nlohmann::json::parse(R"({"model": {"mode": "gates"}})").get<RunConfig>(),
               std::invalid_argument);
}

TEST(RunConfigJson, SeedPropagates) {
  RunConfig c = RunConfig::desk();
  c.seed = 12;
  EXPECT_EQ(c.train_config().seed, 12u);
  EXPECT_EQ(c.model_config().init_seed, 12u);
}

TEST(WorkerThreads, HonoursEnvironment) {
  setenv("MONET_THREADS", "3", 1);
  EXPECT_EQ(worker_threads(), 3);
  setenv("MONET_THREADS", "junk", 1);
  EXPECT_GE(worker_threads(), 1);
  unsetenv("MONET_THREADS");
}

TEST_F(AppTest, GenTemplatesIsByteIdenticalPerSeed) {
  RunConfig c = RunConfig::desk();
  auto a = gen_templates(c, 100, root_ / "a");
  auto b = gen_templates(c, 100, root_ / "b");
  ASSERT_EQ(a.ids.size(), 100u);
  EXPECT_EQ(a.holdout_begin, 80u);
  auto manifest = nlohmann::json::parse(slurp(root_ / "a" / "manifest.json"));
  EXPECT_EQ(manifest.at("ids").size(), 100u);
  for (const auto& id : a.ids)
    EXPECT_EQ(slurp(root_ / "a" / (id + ".json")), slurp(root_ / "b" / (id + ".json"))) << id;
  EXPECT_EQ(slurp(root_ / "a" / "manifest.json"), slurp(root_ / "b" / "manifest.json"));

  auto t0 = load_template(root_ / "a" / (a.ids[0] + ".json"));
  auto again = annotate(c.scales, t0.correspondence, t0.id);
  EXPECT_EQ(template_to_json(again), template_to_json(t0));

  c.seed = 8;
  gen_templates(c, 100, root_ / "c");
  EXPECT_NE(slurp(root_ / "a" / "t0000.json"), slurp(root_ / "c" / "t0000.json"));
}

TEST_F(AppTest, GenTemplatesRejectsUnwritableDirectory) {
  write_file_atomic(root_ / "file", "x");
  EXPECT_THROW(gen_templates(RunConfig::desk(), 4, root_ / "file" / "sub"), std::exception);
}

TEST_F(AppTest, MissingTemplatesIsAnError) {
  auto c = tiny(root_);
  try {
    cmd_pretrain(c, root_ / "run");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("gen-templates"), std::string::npos);
  }
}

TEST_F(AppTest, TemplatesForAnotherConfigAreRejected) {
  auto c = tiny(root_);
  gen_templates(RunConfig::desk(), 4, c.templates_dir);
  EXPECT_THROW(load_templates(c, c.templates_dir), std::invalid_argument);
}

TEST_F(AppTest, PretrainResumeContinuesEpochNumbering) {
  auto c = tiny(root_);
  gen_templates(c, c.template_count, c.templates_dir);
  auto full = cmd_pretrain(c, root_ / "full");

  auto one = c;
  one.train.pretrain_epochs = 1;
  auto first = cmd_pretrain(one, root_ / "resumed");
  ASSERT_EQ(first.metrics.size(), 1u);
  auto second = cmd_pretrain(c, root_ / "resumed", first.checkpoint);
  ASSERT_EQ(second.metrics.size(), 1u);
  EXPECT_EQ(second.metrics[0].epoch, 2);
  EXPECT_EQ(slurp(root_ / "resumed" / "pretrain.ckpt.json"), slurp(root_ / "full" / "pretrain.ckpt.json"));
  EXPECT_EQ(slurp(root_ / "resumed" / "pretrain_metrics.csv"), slurp(root_ / "full" / "pretrain_metrics.csv"));
}

TEST_F(AppTest, ZeroLearningRateSmokeRun) {
  auto c = tiny(root_);
  c.train.lr = 0.0;
  c.train.pretrain_epochs = 3;
  gen_templates(c, c.template_count, c.templates_dir);
  auto r = cmd_pretrain(c, root_ / "run");
  ASSERT_EQ(r.metrics.size(), 3u);
  for (const auto& m : r.metrics) EXPECT_EQ(m.val_rank_loss, r.metrics[0].val_rank_loss);
  auto t = cmd_train(c, root_ / "run", r.checkpoint);
  for (const auto& m : t.metrics) EXPECT_EQ(m.val_pixel_mcc, t.metrics[0].val_pixel_mcc);
}

TEST_F(AppTest, TrainFromScratchAndDetectContract) {
  auto c = tiny(root_);
  gen_templates(c, c.template_count, c.templates_dir);
  auto trained = cmd_train(c, root_ / "run", std::nullopt);
  EXPECT_EQ(trained.metrics.size(), 2u);
  auto loaded = load_checkpoint(trained.checkpoint);
  EXPECT_EQ(loaded.meta.phase, "train");
  EXPECT_FALSE(loaded.meta.pretrained);

  const auto split = load_templates(c, c.templates_dir);
  const SyntheticStream held(c.scales, split.heldout);
  const auto manifest = write_test_set(test_pairs(c, held), 16, root_ / "testset");
  const auto rows = read_manifest(manifest);
  ASSERT_EQ(rows.size(), 6u);

  auto a = cmd_detect(loaded.model, rows[0].image1, rows[0].image2, root_ / "d1");
  auto b = cmd_detect(loaded.model, rows[0].image1, rows[0].image2, root_ / "d2");
  EXPECT_EQ(a.files.size(), 2u + 2u * 2u + 1u);
  EXPECT_TRUE(a.ledger.passed());
  for (const auto& row : a.ledger.rows) EXPECT_EQ(row.executed, ours_budget(c.scales, row.scale));
  EXPECT_EQ(parse_budget_csv(slurp(root_ / "d1" / "ledger.csv")).rows.size(), 2u);
  for (const auto& f : a.files) EXPECT_EQ(slurp(f), slurp(root_ / "d2" / f.filename())) << f;
  EXPECT_EQ(slurp(root_ / "d1" / "score_csv" / "score_s1_1.csv"),
            slurp(root_ / "d2" / "score_csv" / "score_s1_1.csv"));
}

TEST_F(AppTest, EvaluateSelfConsistentManifest) {
  auto c = tiny(root_);
  Model model(c.model_config());
  Rng rng(4);
  std::string csv = "image1,image2,mask1,mask2,label,category\n";
  for (int i = 0; i < 4; ++i) {
    const auto dir = root_ / ("p" + std::to_string(i));
    fs::create_directories(dir);
    write_png_rgb(dir / "a.png", procedural_image(16, rng));
    write_png_rgb(dir / "b.png", procedural_image(16, rng));
    // The model's own masks become the ground truth.
    cmd_detect(model, dir / "a.png", dir / "b.png", dir);
    const std::string p = dir.filename().string() + "/";
    csv += p + "a.png," + p + "b.png," + p + "mask1.png," + p + "mask2.png,1," + (i % 2 ? "blot" : "") + "\n";
  }
  write_file_atomic(root_ / "manifest.csv", csv);
  auto rep = cmd_evaluate(model, root_ / "manifest.csv", root_ / "eval", 0.5, 1);
  if (rep.pixel.counts.tp > 0) EXPECT_EQ(rep.pixel_mcc(), 1.0);
  EXPECT_EQ(rep.pixel.counts.fp, 0u);
  EXPECT_EQ(rep.pixel.counts.fn, 0u);
  EXPECT_TRUE(rep.categories.count("uncategorized"));
  EXPECT_TRUE(rep.categories.count("blot"));
  EXPECT_TRUE(fs::exists(root_ / "eval" / "report.json"));
  EXPECT_TRUE(fs::exists(root_ / "eval" / "report.csv"));
}

TEST_F(AppTest, MalformedManifestNamesRow) {
  write_file_atomic(root_ / "m.csv", "image1,image2,mask1,mask2,label,category\na,b,c,d,1,x\na,b,c,d,maybe,x\n");
  try {
    read_manifest(root_ / "m.csv");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
  }
  write_file_atomic(root_ / "h.csv", "img1,img2\n");
  EXPECT_THROW(read_manifest(root_ / "h.csv"), std::runtime_error);
  write_file_atomic(root_ / "f.csv", "image1,image2,mask1,mask2,label,category\na,b,c\n");
  EXPECT_THROW(read_manifest(root_ / "f.csv"), std::runtime_error);
}

TEST_F(AppTest, UnreadableImageIsAnError) {
  auto c = tiny(root_);
  Model model(c.model_config());
  write_file_atomic(root_ / "bad.png", "not a png");
  EXPECT_THROW(cmd_detect(model, root_ / "bad.png", root_ / "bad.png", root_ / "out"), std::exception);
}

TEST(BudgetTable, FullSizeAndDeskRows) {
  auto full = cmd_budget_table(ScaleConfig::full_size());
  const std::uint64_t ours[] = {4096, 2048, 8192, 32768, 131072};
  const std::uint64_t naive[] = {4096, 65536, 1048576, 16777216, 268435456};
  ASSERT_EQ(full.rows.size(), 5u);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(full.rows[i].ours, ours[i]);
    EXPECT_EQ(full.rows[i].naive, naive[i]);
  }
  auto back = parse_budget_csv(full.to_csv());
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(back.rows[i].ours, ours[i]);
    EXPECT_EQ(back.rows[i].naive, naive[i]);
  }
  auto desk = cmd_budget_table(ScaleConfig::desk());
  ASSERT_EQ(desk.rows.size(), 3u);
  EXPECT_EQ(desk.rows[0].ours, 4096u);
  EXPECT_EQ(desk.rows[1].ours, 2048u);
  EXPECT_EQ(desk.rows[2].ours, 8192u);
}

TEST_F(AppTest, AblateProducesThreeVariants) {
  auto c = tiny(root_);
  c.train.pretrain_epochs = 1;
  c.train.e2e_epochs = 1;
  gen_templates(c, c.template_count, c.templates_dir);
  auto r = cmd_ablate(c, root_ / "ablate");
  ASSERT_EQ(r.table.rows.size(), 3u);
  const auto csv = slurp(root_ / "ablate" / "ablation.csv");
  EXPECT_EQ(csv.rfind("variant,image_mcc,pixel_mcc\n", 0), 0u);
  for (const char* v : {"full", "no_gating", "dot_product"})
    EXPECT_TRUE(fs::exists(root_ / "ablate" / v / "report.json")) << v;
}

#ifdef MONET_CLI_PATH
TEST_F(AppTest, CliExitCodes) {
  const std::string cli = MONET_CLI_PATH;
  const auto csv = root_ / "budget.csv";
  EXPECT_EQ(std::system((cli + " budget-table --csv " + csv.string() + " > /dev/null").c_str()), 0);
  EXPECT_EQ(parse_budget_csv(slurp(csv)).rows.size(), 5u);
  EXPECT_NE(std::system((cli + " train --from-scratch --templates " + (root_ / "none").string() +
                         " > /dev/null 2>&1").c_str()),
            0);
  EXPECT_NE(std::system((cli + " frobnicate > /dev/null 2>&1").c_str()), 0);
}
#endif
