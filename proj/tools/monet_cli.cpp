#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "monet/app.hpp"
#include "monet/io.hpp"

using namespace monet;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string templates;
};

RunConfig resolve(const Globals& g) {
  RunConfig cfg = g.config.empty() ? RunConfig::desk() : load_run_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.out_dir = g.out;
  if (!g.templates.empty()) cfg.templates_dir = g.templates;
  cfg.validate();
  return cfg;
}

Model load_model(const std::string& path) {
  if (path.empty()) throw std::invalid_argument("--checkpoint is required");
  return load_checkpoint(path).model;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"monet: hierarchical duplicated-region detection"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Run config JSON")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Seed for every random stream");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--templates", g.templates, "Template directory");

  auto* gen = app.add_subcommand("gen-templates", "Write annotation templates and a manifest");
  std::optional<int> count;
  int test_set = 0;
  gen->add_option("--count", count, "Number of templates");
  gen->add_option("--test-set", test_set, "Also write this many held-out test pairs to <out>/testset");

  auto* pre = app.add_subcommand("pretrain", "Triplet pretraining");
  std::string resume;
  pre->add_option("--resume", resume, "Continue from a pretraining checkpoint")->check(CLI::ExistingFile);

  auto* train = app.add_subcommand("train", "End-to-end training");
  std::string init;
  bool scratch = false;
  auto* init_opt = train->add_option("--checkpoint", init, "Pretraining (or training) checkpoint")
                       ->check(CLI::ExistingFile);
  train->add_flag("--from-scratch", scratch, "Train without a pretraining checkpoint")->excludes(init_opt);

  auto* detect = app.add_subcommand("detect", "Detect duplicated regions between two images");
  std::string ckpt, image1, image2;
  detect->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  detect->add_option("image1", image1)->required()->check(CLI::ExistingFile);
  detect->add_option("image2", image2)->required()->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("evaluate", "Image and pixel MCC on a manifest");
  std::string manifest;
  std::optional<double> threshold;
  std::optional<std::uint64_t> min_area;
  eval->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  eval->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  eval->add_option("--threshold", threshold, "Mask binarization threshold");
  eval->add_option("--min-area", min_area, "Positive pixels for an image-level positive");

  auto* budget = app.add_subcommand("budget-table", "Naive vs hierarchical comparisons per scale");
  std::optional<int> image_size, top_scale, min_scale;
  std::string csv_path;
  budget->add_option("--image-size", image_size);
  budget->add_option("--top-scale", top_scale);
  budget->add_option("--min-scale", min_scale);
  budget->add_option("--csv", csv_path, "Also write the table as CSV");

  auto* ablate = app.add_subcommand("ablate", "Train and compare full, no_gating and dot_product");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      RunConfig cfg = resolve(g);
      const int n = count.value_or(cfg.template_count);
      auto m = gen_templates(cfg, n, cfg.templates_dir);
      std::cout << "wrote " << m.ids.size() << " templates to " << cfg.templates_dir << " ("
                << m.ids.size() - m.holdout_begin << " held out)\n";
      if (test_set > 0) {
        cfg.test_pairs = test_set;
        const auto split = load_templates(cfg, cfg.templates_dir);
        const SyntheticStream held(cfg.scales, split.heldout, image_source(cfg));
        const auto path = write_test_set(test_pairs(cfg, held), cfg.scales.image_size,
                                         fs::path(cfg.out_dir) / "testset");
        std::cout << "wrote " << path.string() << "\n";
      }
    } else if (*pre) {
      const RunConfig cfg = resolve(g);
      std::optional<fs::path> from;
      if (!resume.empty()) from = resume;
      auto r = cmd_pretrain(cfg, cfg.out_dir, from, &std::cout);
      std::cout << "checkpoint " << r.checkpoint.string() << "\n";
    } else if (*train) {
      const RunConfig cfg = resolve(g);
      std::optional<fs::path> from;
      if (!init.empty()) from = init;
      else if (!cfg.checkpoint.empty()) from = cfg.checkpoint;
      if (!from && !scratch)
        throw std::invalid_argument("train needs --checkpoint <pretrained> or --from-scratch");
      auto r = cmd_train(cfg, cfg.out_dir, from, &std::cout);
      std::cout << "checkpoint " << r.checkpoint.string() << "\n";
    } else if (*detect) {
      const RunConfig cfg = resolve(g);
      const Model model = load_model(ckpt);
      auto r = cmd_detect(model, image1, image2, cfg.out_dir, cfg.threshold);
      std::cout << r.ledger.to_text();
      if (!r.ledger.passed()) {
        std::cerr << "ledger mismatch: " << r.ledger.failures() << "\n";
        return 2;
      }
    } else if (*eval) {
      const RunConfig cfg = resolve(g);
      const Model model = load_model(ckpt);
      const auto area = min_area.value_or(default_min_area(model.scales().image_size));
      auto rep = cmd_evaluate(model, manifest, cfg.out_dir, threshold.value_or(cfg.threshold), area);
      std::cout << rep.to_csv();
    } else if (*budget) {
      ScaleConfig sc = g.config.empty() ? ScaleConfig::full_size() : resolve(g).scales;
      if (image_size) sc.image_size = *image_size;
      if (top_scale) sc.top_scale = *top_scale;
      if (min_scale) sc.min_scale = *min_scale;
      sc.validate();
      const auto table = cmd_budget_table(sc);
      std::cout << table.to_text();
      if (!csv_path.empty()) write_file_atomic(csv_path, table.to_csv());
    } else if (*ablate) {
      const RunConfig cfg = resolve(g);
      auto r = cmd_ablate(cfg, cfg.out_dir, &std::cout);
      std::cout << r.table.to_csv();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
