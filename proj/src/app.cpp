#include "monet/app.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "monet/io.hpp"

namespace monet {

RunConfig RunConfig::desk() {
  RunConfig c;
  c.train.lr = 2e-3;
  c.train.batch_size = 8;
  c.train.triplets_per_pair = 4;
  c.train.margin_mode = MarginMode::flexible;
  return c;
}

void RunConfig::validate() const {
  scales.validate();
  train.validate();
  model_config().validate();
  if (template_count < 2) throw std::invalid_argument("RunConfig: template_count must be >= 2");
  if (region_min() < 1 || region_min() > region_max() || region_max() > scales.image_size)
    throw std::invalid_argument("RunConfig: region sizes must satisfy 1 <= min <= max <= N");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw std::invalid_argument("RunConfig: holdout_fraction must be in (0, 1)");
  if (test_pairs < 1) throw std::invalid_argument("RunConfig: test_pairs must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("RunConfig: threshold must be in (0, 1)");
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.scales = scales;
  m.detector_hidden = detector_hidden;
  m.decoder_channels = decoder_channels;
  m.mode = mode;
  m.init_seed = seed;
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"scales", c.scales},
       {"train", c.train},
       {"model",
        {{"detector_hidden", c.detector_hidden},
         {"decoder_channels", c.decoder_channels},
         {"mode", std::string(to_string(c.mode))}}},
       {"seed", c.seed},
       {"templates",
        {{"count", c.template_count},
         {"min_region", c.min_region},
         {"max_region", c.max_region},
         {"holdout_fraction", c.holdout_fraction}}},
       {"paths",
        {{"templates", c.templates_dir},
         {"images", c.images},
         {"checkpoint", c.checkpoint},
         {"out", c.out_dir}}},
       {"eval", {{"test_pairs", c.test_pairs}, {"threshold", c.threshold}, {"min_area", c.min_area}}}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  nlohmann::json merged = RunConfig::desk();
  merged.merge_patch(j);
  c.scales = merged.at("scales").get<ScaleConfig>();
  c.train = merged.at("train").get<TrainConfig>();
  const auto& m = merged.at("model");
  c.detector_hidden = m.at("detector_hidden").get<int>();
  c.decoder_channels = m.at("decoder_channels").get<int>();
  c.mode = ablation_from_string(m.at("mode").get<std::string>());
  c.seed = merged.at("seed").get<std::uint64_t>();
  const auto& t = merged.at("templates");
  c.template_count = t.at("count").get<int>();
  c.min_region = t.at("min_region").get<int>();
  c.max_region = t.at("max_region").get<int>();
  c.holdout_fraction = t.at("holdout_fraction").get<double>();
  const auto& p = merged.at("paths");
  c.templates_dir = p.at("templates").get<std::string>();
  c.images = p.at("images").get<std::string>();
  c.checkpoint = p.at("checkpoint").get<std::string>();
  c.out_dir = p.at("out").get<std::string>();
  const auto& e = merged.at("eval");
  c.test_pairs = e.at("test_pairs").get<int>();
  c.threshold = e.at("threshold").get<double>();
  c.min_area = e.at("min_area").get<std::uint64_t>();
  c.validate();
}

RunConfig load_run_config(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("config " + path.string() + ": " + e.what());
  }
  return j.get<RunConfig>();
}

int worker_threads() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MONET_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) n = v;
  }
  return std::max(1, n);
}

namespace {

template <class F>
void parallel_for(std::size_t count, F&& body) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(worker_threads()), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < count;) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::string pad_index(std::size_t i, int width) {
  std::string s = std::to_string(i);
  return std::string(s.size() < static_cast<std::size_t>(width) ? width - s.size() : 0, '0') + s;
}

std::vector<std::uint8_t> to_png_mask(const std::vector<std::uint8_t>& mask) {
  std::vector<std::uint8_t> out(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] ? 255 : 0;
  return out;
}

std::vector<std::uint8_t> read_mask(const fs::path& path, int n) {
  int w = 0, h = 0;
  auto raw = read_png_gray(path, w, h);
  if (w == n && h == n) {
    for (auto& v : raw) v = v >= 128 ? 1 : 0;
    return raw;
  }
  Tensor t({static_cast<std::size_t>(h), static_cast<std::size_t>(w), 1});
  for (std::size_t i = 0; i < raw.size(); ++i) t[i] = raw[i] >= 128 ? 1.0 : 0.0;
  const Tensor r = resize_bilinear(t, n);
  std::vector<std::uint8_t> out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = r[i] >= 0.5 ? 1 : 0;
  return out;
}

Tensor read_image(const fs::path& path, int n) {
  Tensor img = read_png_rgb(path);
  if (img.dim(0) == static_cast<std::size_t>(n) && img.dim(1) == static_cast<std::size_t>(n))
    return img;
  return resize_bilinear(img, n);
}

void write_metrics(const fs::path& path, const std::vector<EpochMetrics>& rows) {
  std::string csv = metrics_csv_header() + "\n";
  for (const auto& m : rows) csv += metrics_csv_row(m) + "\n";
  write_file_atomic(path, csv);
}

/// Rows of an earlier metrics file up to and including `last_epoch`.
std::vector<EpochMetrics> read_metrics(const fs::path& path, int last_epoch) {
  std::vector<EpochMetrics> rows;
  if (!fs::exists(path)) return rows;
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  auto num = [](const std::string& s) { return s.empty() ? EpochMetrics::kNone : std::stod(s); };
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    f.resize(8);
    EpochMetrics m;
    m.epoch = std::stoi(f[0]);
    if (m.epoch > last_epoch) break;
    m.phase = f[1];
    m.rank_loss = num(f[2]);
    m.bce_loss = num(f[3]);
    m.val_pixel_mcc = num(f[4]);
    m.val_rank_loss = num(f[5]);
    m.val_pos_score = num(f[6]);
    m.val_neg_score = num(f[7]);
    rows.push_back(m);
  }
  return rows;
}

void check_model_config(const RunConfig& cfg, const Model& model) {
  if (!(model.scales() == cfg.scales))
    throw std::invalid_argument("checkpoint scales " + nlohmann::json(model.scales()).dump() +
                                " do not match the run config " + nlohmann::json(cfg.scales).dump());
}

}  // namespace

// ---------------------------------------------------------------------------
// Templates and data

TemplateManifest gen_templates(const RunConfig& cfg, int count, const fs::path& dir) {
  cfg.validate();
  if (count < 2) throw std::invalid_argument("gen-templates: count must be >= 2");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw std::runtime_error("gen-templates: cannot create output directory " + dir.string());

  TemplateManifest manifest;
  manifest.cfg_hash = config_hash(cfg.scales);
  manifest.seed = cfg.seed;
  Rng rng = Rng(cfg.seed).fork("templates");
  for (int i = 0; i < count; ++i) {
    const std::string id = "t" + pad_index(static_cast<std::size_t>(i), 4);
    auto t = generate_template(cfg.scales, rng, cfg.region_min(), cfg.region_max(), id);
    save_template(dir / (id + ".json"), t);
    manifest.ids.push_back(id);
  }
  const auto held = static_cast<std::size_t>(std::lround(count * cfg.holdout_fraction));
  manifest.holdout_begin = manifest.ids.size() - std::clamp<std::size_t>(held, 1, manifest.ids.size() - 1);

  nlohmann::json j = {{"cfg_hash", manifest.cfg_hash},
                      {"seed", manifest.seed},
                      {"scales", cfg.scales},
                      {"count", count},
                      {"holdout_begin", manifest.holdout_begin},
                      {"ids", manifest.ids}};
  write_file_atomic(dir / "manifest.json", j.dump(2) + "\n");
  return manifest;
}

TemplateSplit load_templates(const RunConfig& cfg, const fs::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path))
    throw std::runtime_error("no template manifest at " + manifest_path.string() +
                             " (run gen-templates first)");
  const auto j = nlohmann::json::parse(read_file(manifest_path));
  const auto hash = j.at("cfg_hash").get<std::string>();
  if (hash != config_hash(cfg.scales))
    throw std::invalid_argument("templates in " + dir.string() + " were generated for config " +
                                hash + ", run config is " + config_hash(cfg.scales));
  const auto ids = j.at("ids").get<std::vector<std::string>>();
  const auto holdout = j.at("holdout_begin").get<std::size_t>();
  TemplateSplit split;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto t = load_template(dir / (ids[i] + ".json"));
    (i < holdout ? split.train : split.heldout).push_back(std::move(t));
  }
  if (split.train.empty() || split.heldout.empty())
    throw std::invalid_argument("template manifest needs both training and held-out templates");
  return split;
}

BaseImageSource image_source(const RunConfig& cfg) {
  if (cfg.images.empty() || cfg.images == "procedural") return {};
  const fs::path dir = cfg.images;
  if (!fs::is_directory(dir)) throw std::runtime_error("image directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.size() < 2) throw std::runtime_error("need at least two PNG images in " + dir.string());
  std::vector<Tensor> pool;
  for (const auto& f : files) pool.push_back(read_image(f, cfg.scales.image_size));
  return BaseImageSource(std::move(pool));
}

TripletSet validation_triplets(const RunConfig& cfg, const SyntheticStream& heldout) {
  Rng rng = Rng(cfg.seed).fork("val-triplets");
  return make_triplet_set(heldout, cfg.train.val_triplets_per_scale, cfg.train.triplets_per_pair, rng);
}

std::vector<SyntheticSample> validation_pairs(const RunConfig& cfg, const SyntheticStream& heldout) {
  Rng rng = Rng(cfg.seed).fork("val-pairs");
  return heldout.mixed(cfg.train.val_pairs, 0.5, rng);
}

std::vector<SyntheticSample> test_pairs(const RunConfig& cfg, const SyntheticStream& heldout) {
  Rng rng = Rng(cfg.seed).fork("test-pairs");
  return heldout.mixed(cfg.test_pairs, 0.5, rng);
}

fs::path write_test_set(const std::vector<SyntheticSample>& pairs, int image_size,
                        const fs::path& dir) {
  fs::create_directories(dir);
  std::string csv = "image1,image2,mask1,mask2,label,category\n";
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& s = pairs[i];
    const std::string stem = "pair" + pad_index(i, 4);
    write_png_rgb(dir / (stem + "_1.png"), s.image1);
    write_png_rgb(dir / (stem + "_2.png"), s.image2);
    write_png_gray(dir / (stem + "_mask1.png"), to_png_mask(s.gt_mask1), image_size, image_size);
    write_png_gray(dir / (stem + "_mask2.png"), to_png_mask(s.gt_mask2), image_size, image_size);
    csv += stem + "_1.png," + stem + "_2.png," + stem + "_mask1.png," + stem + "_mask2.png," +
           (s.manipulated ? "1" : "0") + ",synthetic\n";
  }
  const auto path = dir / "manifest.csv";
  write_file_atomic(path, csv);
  return path;
}

// ---------------------------------------------------------------------------
// Commands

PhaseResult cmd_pretrain(const RunConfig& cfg, const fs::path& out,
                         const std::optional<fs::path>& resume, std::ostream* log) {
  cfg.validate();
  const auto split = load_templates(cfg, cfg.templates_dir);
  const auto images = image_source(cfg);
  const SyntheticStream train(cfg.scales, split.train, images);
  const SyntheticStream held(cfg.scales, split.heldout, images);
  const auto val = validation_triplets(cfg, held);
  const auto tc = cfg.train_config();
  fs::create_directories(out);
  const auto ckpt_path = out / "pretrain.ckpt.json";
  const auto metrics_path = out / "pretrain_metrics.csv";

  std::optional<LoadedCheckpoint> loaded;
  RunOptions opts;
  opts.log = log;
  std::vector<EpochMetrics> rows;
  if (resume) {
    loaded = load_checkpoint(*resume);
    check_model_config(cfg, loaded->model);
    if (loaded->meta.phase != "pretrain")
      throw std::invalid_argument("resume: " + resume->string() + " is not a pretraining checkpoint");
    opts.start_epoch = loaded->meta.epoch;
    if (loaded->optimizer) opts.resume = &*loaded->optimizer;
    rows = read_metrics(metrics_path, opts.start_epoch);
  }
  Model model = loaded ? std::move(loaded->model) : Model(cfg.model_config());

  opts.on_epoch = [&](const EpochMetrics& m, Model& current, const AdamState& state) {
    rows.push_back(m);
    save_checkpoint(ckpt_path, current, {"pretrain", m.epoch, true}, &state);
    write_metrics(metrics_path, rows);
  };
  auto metrics = pretrain(model, train, val, tc, opts);
  if (metrics.empty()) {
    save_checkpoint(ckpt_path, model, {"pretrain", opts.start_epoch, opts.start_epoch > 0});
    write_metrics(metrics_path, rows);
  }
  return {std::move(model), std::move(metrics), ckpt_path};
}

PhaseResult cmd_train(const RunConfig& cfg, const fs::path& out,
                      const std::optional<fs::path>& init, std::ostream* log) {
  cfg.validate();
  const auto split = load_templates(cfg, cfg.templates_dir);
  const auto images = image_source(cfg);
  const SyntheticStream train(cfg.scales, split.train, images);
  const SyntheticStream held(cfg.scales, split.heldout, images);
  const auto val = validation_pairs(cfg, held);
  const auto tc = cfg.train_config();
  fs::create_directories(out);
  const auto ckpt_path = out / "model.ckpt.json";
  const auto metrics_path = out / "train_metrics.csv";

  std::optional<LoadedCheckpoint> loaded;
  RunOptions opts;
  opts.log = log;
  std::vector<EpochMetrics> rows;
  bool pretrained = false;
  if (init) {
    loaded = load_checkpoint(*init);
    check_model_config(cfg, loaded->model);
    pretrained = loaded->meta.pretrained;
    if (loaded->meta.phase == "train") {
      opts.start_epoch = loaded->meta.epoch;
      if (loaded->optimizer) opts.resume = &*loaded->optimizer;
      rows = read_metrics(metrics_path, opts.start_epoch);
    }
  }
  Model model = loaded ? std::move(loaded->model) : Model(cfg.model_config());

  opts.on_epoch = [&](const EpochMetrics& m, Model& current, const AdamState& state) {
    rows.push_back(m);
    save_checkpoint(ckpt_path, current, {"train", m.epoch, pretrained}, &state);
    write_metrics(metrics_path, rows);
  };
  auto metrics = train_end_to_end(model, train, val, tc, pretrained, opts);
  if (metrics.empty()) {
    save_checkpoint(ckpt_path, model, {"train", opts.start_epoch, pretrained});
    write_metrics(metrics_path, rows);
  }
  return {std::move(model), std::move(metrics), ckpt_path};
}

DetectResult cmd_detect(const Model& model, const fs::path& image1, const fs::path& image2,
                        const fs::path& out, double threshold) {
  const int n = model.scales().image_size;
  const Tensor a = read_image(image1, n);
  const Tensor b = read_image(image2, n);
  DetectResult r;
  r.output = run_pipeline(model, a, b);
  r.ledger = verify_budget(r.output.ledger, model.scales());
  fs::create_directories(out / "score_csv");

  auto emit = [&](const fs::path& p) { r.files.push_back(p); };
  const auto m1 = binarize(r.output.mask1, threshold), m2 = binarize(r.output.mask2, threshold);
  write_png_gray(out / "mask1.png", to_png_mask(m1), n, n);
  emit(out / "mask1.png");
  write_png_gray(out / "mask2.png", to_png_mask(m2), n, n);
  emit(out / "mask2.png");

  for (const auto& [s, map] : r.output.score_maps) {
    for (int side = 1; side <= 2; ++side) {
      const auto& o = side == 1 ? map.o1 : map.o2;
      std::vector<std::uint8_t> px(o.size());
      std::string csv;
      for (std::size_t i = 0; i < o.size(); ++i) {
        px[i] = static_cast<std::uint8_t>(std::lround(std::clamp(o[i], 0.0, 1.0) * 255.0));
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", o[i]);
        csv += buf;
        csv += (i + 1) % static_cast<std::size_t>(map.grid) == 0 ? '\n' : ',';
      }
      const std::string stem = "score_s" + std::to_string(s) + "_" + std::to_string(side);
      write_png_gray(out / (stem + ".png"), px, map.grid, map.grid);
      emit(out / (stem + ".png"));
      write_file_atomic(out / "score_csv" / (stem + ".csv"), csv);
    }
  }
  write_file_atomic(out / "ledger.csv", r.ledger.to_csv());
  emit(out / "ledger.csv");
  return r;
}

std::vector<ManifestRow> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read manifest " + path.string());
  const fs::path base = path.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("manifest " + path.string() + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "image1,image2,mask1,mask2,label,category")
    throw std::runtime_error("manifest row 1: expected header image1,image2,mask1,mask2,label,category");
  std::vector<ManifestRow> rows;
  for (int row = 2; std::getline(in, line); ++row) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fail = [&](const std::string& why) {
      throw std::runtime_error("manifest row " + std::to_string(row) + ": " + why);
    };
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1)
      f.push_back(line.substr(start, pos - start));
    f.push_back(line.substr(start));
    if (f.size() == 5) f.emplace_back();
    if (f.size() != 6) fail("expected 6 fields, got " + std::to_string(f.size()));
    for (int i = 0; i < 4; ++i)
      if (f[i].empty()) fail("empty path in column " + std::to_string(i + 1));
    ManifestRow r;
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
    r.image1 = resolve(f[0]);
    r.image2 = resolve(f[1]);
    r.mask1 = resolve(f[2]);
    r.mask2 = resolve(f[3]);
    if (f[4] == "1" || f[4] == "true") r.label = true;
    else if (f[4] == "0" || f[4] == "false") r.label = false;
    else fail("label must be 0/1/true/false, got '" + f[4] + "'");
    r.category = f[5];
    rows.push_back(std::move(r));
  }
  return rows;
}

EvalReport cmd_evaluate(const Model& model, const fs::path& manifest, const fs::path& out,
                        double threshold, std::uint64_t min_area) {
  const auto rows = read_manifest(manifest);
  if (rows.empty()) throw std::runtime_error("manifest " + manifest.string() + " has no rows");
  const int n = model.scales().image_size;
  std::vector<EvalItem> items(rows.size() * 2);
  parallel_for(rows.size(), [&](std::size_t i) {
    const auto& r = rows[i];
    const auto o = run_pipeline(model, read_image(r.image1, n), read_image(r.image2, n));
    const std::string name = "row" + std::to_string(i + 2);
    items[2 * i] = {name + "/1", r.category, binarize(o.mask1, threshold), read_mask(r.mask1, n), r.label};
    items[2 * i + 1] = {name + "/2", r.category, binarize(o.mask2, threshold), read_mask(r.mask2, n), r.label};
  });
  const auto report = evaluate(items, min_area);
  fs::create_directories(out);
  write_file_atomic(out / "report.json", report.to_json().dump(2) + "\n");
  write_file_atomic(out / "report.csv", report.to_csv());
  return report;
}

EvalReport evaluate_samples(const Model& model, const std::vector<SyntheticSample>& samples,
                            double threshold, std::uint64_t min_area) {
  std::vector<EvalItem> items(samples.size() * 2);
  parallel_for(samples.size(), [&](std::size_t i) {
    const auto& s = samples[i];
    const auto o = run_pipeline(model, s.image1, s.image2);
    const std::string name = "pair" + std::to_string(i);
    items[2 * i] = {name + "/1", "", binarize(o.mask1, threshold), s.gt_mask1, s.manipulated};
    items[2 * i + 1] = {name + "/2", "", binarize(o.mask2, threshold), s.gt_mask2, s.manipulated};
  });
  return evaluate(items, min_area);
}

BudgetReport cmd_budget_table(const ScaleConfig& cfg) { return budget_table(cfg); }

AblationResult cmd_ablate(const RunConfig& cfg, const fs::path& out, std::ostream* log) {
  cfg.validate();
  const auto split = load_templates(cfg, cfg.templates_dir);
  const SyntheticStream held(cfg.scales, split.heldout, image_source(cfg));
  const auto test = test_pairs(cfg, held);
  AblationResult result;
  for (auto mode : {AblationMode::full, AblationMode::no_gating, AblationMode::dot_product}) {
    RunConfig variant = cfg;
    variant.mode = mode;
    const fs::path dir = out / std::string(to_string(mode));
    if (log) *log << "== " << to_string(mode) << std::endl;
    auto pre = cmd_pretrain(variant, dir, std::nullopt, log);
    auto trained = cmd_train(variant, dir, pre.checkpoint, log);
    auto report = evaluate_samples(trained.model, test, cfg.threshold, cfg.area_threshold());
    write_file_atomic(dir / "report.json", report.to_json().dump(2) + "\n");
    write_file_atomic(dir / "report.csv", report.to_csv());
    result.reports.emplace_back(std::string(to_string(mode)), std::move(report));
  }
  result.table = compare_variants(result.reports);
  write_file_atomic(out / "ablation.csv", result.table.to_csv());
  return result;
}

}  // namespace monet
