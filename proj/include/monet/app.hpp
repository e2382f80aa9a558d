#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "monet/checkpoint.hpp"
#include "monet/evaluation.hpp"
#include "monet/search.hpp"
#include "monet/training.hpp"

namespace monet {

namespace fs = std::filesystem;

/// Everything one command needs: scales, model, schedule, data and paths.
struct RunConfig {
  ScaleConfig scales = ScaleConfig::desk();
  TrainConfig train;
  int detector_hidden = 256;
  int decoder_channels = 8;
  AblationMode mode = AblationMode::full;
  std::uint64_t seed = 7;

  int template_count = 100;
  int min_region = 0;  // 0: N / 8
  int max_region = 0;  // 0: N / 2
  double holdout_fraction = 0.2;

  std::string templates_dir = "templates";
  std::string images = "procedural";  // or a directory of PNGs
  std::string checkpoint;
  std::string out_dir = "out";

  int test_pairs = 200;
  double threshold = 0.5;
  std::uint64_t min_area = 0;  // 0: (N / 64)^2

  /// Desk-scale defaults (N = 64, three scales).
  static RunConfig desk();

  void validate() const;
  int region_min() const { return min_region ? min_region : scales.image_size / 8; }
  int region_max() const { return max_region ? max_region : scales.image_size / 2; }
  std::uint64_t area_threshold() const {
    return min_area ? min_area : default_min_area(scales.image_size);
  }
  ModelConfig model_config() const;
  /// The schedule with the run seed applied.
  TrainConfig train_config() const;
};

void to_json(nlohmann::json& j, const RunConfig& cfg);
/// Missing keys keep their desk defaults.
void from_json(const nlohmann::json& j, RunConfig& cfg);
RunConfig load_run_config(const fs::path& path);

/// Worker cap from MONET_THREADS (default: hardware concurrency, at least 1).
int worker_threads();

// ---------------------------------------------------------------------------
// Templates and data

struct TemplateManifest {
  std::string cfg_hash;
  std::uint64_t seed = 0;
  std::vector<std::string> ids;
  std::size_t holdout_begin = 0;  // ids[holdout_begin..] are held out
};

/// Writes `count` templates plus manifest.json to `dir`. Same seed, same bytes.
TemplateManifest gen_templates(const RunConfig& cfg, int count, const fs::path& dir);

struct TemplateSplit {
  std::vector<AnnotationTemplate> train;
  std::vector<AnnotationTemplate> heldout;
};

TemplateSplit load_templates(const RunConfig& cfg, const fs::path& dir);

BaseImageSource image_source(const RunConfig& cfg);

/// Held-out triplets used as the pretraining validation set.
TripletSet validation_triplets(const RunConfig& cfg, const SyntheticStream& heldout);
std::vector<SyntheticSample> validation_pairs(const RunConfig& cfg, const SyntheticStream& heldout);
/// 50/50 held-out test pairs.
std::vector<SyntheticSample> test_pairs(const RunConfig& cfg, const SyntheticStream& heldout);

/// Writes test pairs as PNGs with a manifest.csv in `dir`.
fs::path write_test_set(const std::vector<SyntheticSample>& pairs, int image_size,
                        const fs::path& dir);

// ---------------------------------------------------------------------------
// Commands

struct PhaseResult {
  Model model;
  std::vector<EpochMetrics> metrics;
  fs::path checkpoint;
};

/// Triplet pretraining. Writes pretrain.ckpt.json and pretrain_metrics.csv
/// to `out` after every epoch; `resume` continues from a saved checkpoint.
PhaseResult cmd_pretrain(const RunConfig& cfg, const fs::path& out,
                         const std::optional<fs::path>& resume = std::nullopt,
                         std::ostream* log = nullptr);

/// End-to-end training from a pretraining checkpoint (or from scratch when
/// `init` is empty). Writes model.ckpt.json and train_metrics.csv.
PhaseResult cmd_train(const RunConfig& cfg, const fs::path& out,
                      const std::optional<fs::path>& init,
                      std::ostream* log = nullptr);

struct DetectResult {
  PipelineOutput output;
  BudgetReport ledger;
  std::vector<fs::path> files;
};

/// Masks, per-scale score maps (PNG plus CSV) and the ledger CSV.
DetectResult cmd_detect(const Model& model, const fs::path& image1, const fs::path& image2,
                        const fs::path& out, double threshold = 0.5);

struct ManifestRow {
  fs::path image1, image2, mask1, mask2;
  bool label = false;
  std::string category;
};

/// CSV with header image1,image2,mask1,mask2,label,category; relative paths
/// resolve against the manifest directory. Errors name the row number.
std::vector<ManifestRow> read_manifest(const fs::path& path);

/// Evaluates a model on manifest rows; writes report.json and report.csv.
EvalReport cmd_evaluate(const Model& model, const fs::path& manifest, const fs::path& out,
                        double threshold, std::uint64_t min_area);
/// Runs the model on in-memory pairs (parallel up to worker_threads()).
EvalReport evaluate_samples(const Model& model, const std::vector<SyntheticSample>& samples,
                            double threshold, std::uint64_t min_area);

BudgetReport cmd_budget_table(const ScaleConfig& cfg);

struct AblationResult {
  VariantTable table;
  std::vector<std::pair<std::string, EvalReport>> reports;
};

/// Trains full, no_gating and dot_product with identical budgets and seeds and
/// compares them on the same held-out test set.
AblationResult cmd_ablate(const RunConfig& cfg, const fs::path& out, std::ostream* log = nullptr);

}  // namespace monet
