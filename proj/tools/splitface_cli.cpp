// splitface: command-line front end for the whole pipeline.
#include <malloc.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "splitface/cam.hpp"
#include "splitface/checkpoint.hpp"
#include "splitface/config.hpp"
#include "splitface/data.hpp"
#include "splitface/evaluation.hpp"
#include "splitface/fusion.hpp"
#include "splitface/nn/gradcheck.hpp"
#include "splitface/synthetic.hpp"
#include "splitface/text.hpp"
#include "splitface/training.hpp"

namespace fs = std::filesystem;
using namespace splitface;

namespace {

// Output directory layout.
struct Layout {
  fs::path root;
  fs::path datasets() const { return root / "datasets"; }
  fs::path checkpoints() const { return root / "checkpoints"; }
  fs::path tables() const { return root / "tables"; }
  fs::path reports() const { return root / "reports"; }
  fs::path heatmaps() const { return root / "heatmaps"; }
  fs::path logs() const { return root / "logs"; }
  fs::path stage_checkpoint(int stage) const {
    return checkpoints() / ("stage" + std::to_string(stage) + ".ckpt");
  }
  fs::path latest_checkpoint() const {
    if (fs::exists(stage_checkpoint(2))) return stage_checkpoint(2);
    if (fs::exists(stage_checkpoint(1))) return stage_checkpoint(1);
    throw MissingInput("no checkpoint under " + checkpoints().string() + "; run train first");
  }
  fs::path thresholds() const { return tables() / "thresholds.csv"; }
  fs::path ranking() const { return tables() / "ranking.csv"; }
  fs::path stage1_ranking() const { return tables() / "ranking_stage1.csv"; }
};

// Log file per command, mirrored to stdout.
class Log {
 public:
  Log(const Layout& layout, const std::string& command) {
    fs::create_directories(layout.logs());
    file_.open(layout.logs() / (command + ".log"), std::ios::trunc);
  }
  void operator()(const std::string& line) {
    std::cout << line << '\n';
    file_ << line << '\n';
    file_.flush();
  }
  void quiet(const std::string& line) { file_ << line << '\n'; }

 private:
  std::ofstream file_;
};

struct Options {
  std::string config;
  std::string out = "out";
  std::string data;
  std::optional<std::uint64_t> seed;
  std::optional<double> width_scale;
  std::optional<int> epochs1, epochs2, batch_size;
  std::optional<std::string> threshold_mode;
  std::optional<std::string> aggregator;
  std::string stage = "auto";
  std::string variant = "P-U12";
  std::string predictor = "FULL";
  std::string attribute;
  std::string image;
  std::string split = "test";
  std::string method = "all";
  std::string checkpoint;
  std::string attributes_file, partition_file, name;
  int synth_train = 2000, synth_val = 500, synth_test = 500, image_size = 128;
  double tolerance = 1e-4;
};

RunConfig resolve(const Options& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : parse_run_config(o.config);
  if (!o.data.empty()) cfg.dataset = o.data;
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.width_scale) cfg.train.width_scale = *o.width_scale;
  if (o.epochs1) cfg.train.epochs_stage1 = *o.epochs1;
  if (o.epochs2) cfg.train.epochs_stage2 = *o.epochs2;
  if (o.batch_size) cfg.train.batch_size = *o.batch_size;
  if (o.threshold_mode) cfg.set("fusion.threshold_mode", *o.threshold_mode);
  if (o.aggregator) cfg.set("fusion.aggregator", *o.aggregator);
  cfg.validate();
  return cfg;
}

void log_config(Log& log, const RunConfig& cfg) {
  log.quiet("# resolved config");
  std::string block = cfg.resolved();
  std::size_t start = 0;
  while (start < block.size()) {
    const auto end = block.find('\n', start);
    log.quiet(block.substr(start, end - start));
    start = end + 1;
  }
}

Dataset require_dataset(const RunConfig& cfg) {
  if (cfg.dataset.empty()) throw MissingInput("no dataset given (use --data or data.dataset)");
  return load_dataset(cfg.dataset);
}

std::string dataset_id(const fs::path& p) {
  const auto name = p.filename().empty() ? p.parent_path().filename() : p.filename();
  return name.empty() ? std::string("dataset") : name.string();
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError("split must be train, val or test");
}

FusionMethod fusion_method(const std::string& aggregator) {
  if (aggregator == "hrp") return FusionMethod::hrp;
  if (aggregator == "median") return FusionMethod::nsa_median;
  return FusionMethod::nsa_product;
}

ThresholdTable thresholds_for(const RunConfig& cfg, const Layout& L, const SplitFaceModel& model) {
  if (cfg.threshold_mode == ThresholdMode::fixed) return fixed_thresholds(model.mask(), model.num_attributes());
  if (!fs::exists(L.thresholds()))
    throw MissingInput("threshold table " + L.thresholds().string() + " not found; run calibrate first");
  return read_threshold_table(L.thresholds(), model.attribute_names());
}

PredictorRanking ranking_for(const Layout& L, const SplitFaceModel& model) {
  if (!fs::exists(L.ranking()))
    throw MissingInput("ranking table " + L.ranking().string() + " not found; run calibrate first");
  return read_ranking_file(L.ranking(), model.attribute_names());
}

// --- commands ----------------------------------------------------------------

int cmd_synth(const Options& o) {
  Layout L{o.out};
  Log log(L, "synth");
  synthetic::Config c;
  c.train = o.synth_train;
  c.val = o.synth_val;
  c.test = o.synth_test;
  c.image_size = o.image_size;
  c.seed = o.seed.value_or(1);
  const fs::path dir = L.datasets() / (o.name.empty() ? "synthetic" : o.name);
  synthetic::generate(c, dir);
  log("wrote " + std::to_string(c.train + c.val + c.test) + " images to " + dir.string());
  return 0;
}

int cmd_gen_partial(const Options& o) {
  const RunConfig cfg = resolve(o);
  Layout L{o.out};
  Log log(L, "gen-partial");
  log_config(log, cfg);
  const Dataset data = require_dataset(cfg);
  std::vector<PartialVariant> variants;
  if (o.variant == "all") {
    variants.assign(kPartialVariants.begin(), kPartialVariants.end());
  } else {
    const auto v = parse_variant_name(o.variant);
    if (!v) throw ConfigError("unknown variant '" + o.variant + "'");
    variants.push_back(*v);
  }
  for (auto v : variants) {
    const fs::path dir = L.datasets() / (dataset_id(cfg.dataset) + "_" + std::string(variant_name(v)));
    std::vector<std::string> skipped;
    const auto r = generate_partial_dataset(data, v, dir, cfg.train.tau, &skipped);
    for (const auto& line : skipped) log(line);
    log(std::string(variant_name(v)) + ": wrote " + std::to_string(r.written) + " images, skipped " +
        std::to_string(r.skipped.size()) + " -> " + dir.string());
  }
  return 0;
}

int cmd_train(const Options& o) {
  const RunConfig cfg = resolve(o);
  Layout L{o.out};
  Log log(L, "train");
  log_config(log, cfg);
  if (o.stage != "1" && o.stage != "2" && o.stage != "auto") throw ConfigError("--stage must be 1, 2 or auto");
  const Dataset data = require_dataset(cfg);
  const auto& names = data.annotations().names;
  const auto val = data.indices(Split::val);

  if (o.stage == "1" || o.stage == "auto") {
    ModelConfig mc;
    mc.num_attributes = static_cast<int>(names.size());
    mc.width_scale = cfg.train.width_scale;
    mc.seed = cfg.train.seed;
    mc.attribute_names = names;
    SplitFaceModel model(mc);
    nn::AdamState<float> adam;
    TrainHooks hooks;
    hooks.log = [&](const std::string& s) { log(s); };
    hooks.epoch_end = [&](int stage, int epoch) {
      save_checkpoint(L.stage_checkpoint(1), model, &adam, {stage, epoch, cfg.train.seed});
    };
    train_stage1(model, adam, data, cfg.train, hooks);
    save_checkpoint(L.stage_checkpoint(1), model, &adam, {1, cfg.train.epochs_stage1, cfg.train.seed});
    const auto scores = score_dataset(model, data, val, cfg.train.eval_batch_size, cfg.train.tau);
    const auto ranking = rank_predictors(scores, labels_of(data, val), model.mask());
    write_ranking_file(L.stage1_ranking(), ranking, names);
    log("stage 1 ranking -> " + L.stage1_ranking().string());
  }
  if (o.stage == "2" || o.stage == "auto") {
    Checkpoint ck = load_checkpoint(L.stage_checkpoint(1));
    if (ck.meta.stage != 1) throw ConfigError(L.stage_checkpoint(1).string() + " is not a stage-1 checkpoint");
    SplitFaceModel& model = *ck.model;
    nn::AdamState<float> adam = ck.adam.value_or(nn::AdamState<float>{});
    const auto ranking = read_ranking_file(L.stage1_ranking(), model.attribute_names());
    const AttributeMask pruned = prune_masks(ranking, cfg.train.d);
    TrainHooks hooks;
    hooks.log = [&](const std::string& s) { log(s); };
    hooks.epoch_end = [&](int stage, int epoch) {
      save_checkpoint(L.stage_checkpoint(2), model, &adam, {stage, epoch, ck.meta.seed});
    };
    train_stage2(model, adam, pruned, data, cfg.train, hooks);
    save_checkpoint(L.stage_checkpoint(2), model, &adam, {2, cfg.train.epochs_stage2, ck.meta.seed});
    log("stage 2 checkpoint -> " + L.stage_checkpoint(2).string());
  }
  return 0;
}

int cmd_calibrate(const Options& o) {
  const RunConfig cfg = resolve(o);
  Layout L{o.out};
  Log log(L, "calibrate");
  log_config(log, cfg);
  const Dataset data = require_dataset(cfg);
  const fs::path path = o.checkpoint.empty() ? L.latest_checkpoint() : fs::path(o.checkpoint);
  const Checkpoint ck = load_checkpoint(path);
  const auto val = data.indices(Split::val);
  if (val.empty()) throw EmptyValidationSet("dataset " + cfg.dataset.string() + " has no validation images");
  const auto scores = score_dataset(*ck.model, data, val, cfg.train.eval_batch_size, cfg.train.tau);
  const auto labels = labels_of(data, val);
  const auto table = calibrate_thresholds(scores, labels, ck.model->mask());
  const auto ranking = rank_from_thresholds(table, ck.model->mask());
  write_threshold_table(L.thresholds(), table, ck.model->attribute_names());
  write_ranking_file(L.ranking(), ranking, ck.model->attribute_names());
  for (std::size_t a = 0; a < ranking.order.size(); ++a) {
    const int top = ranking.order[a].front();
    log(ck.model->attribute_names()[a] + ": top " + predictor_name(top) +
        " val_acc=" + text::format_fixed(ranking.accuracy[a][top], 4));
  }
  log("thresholds -> " + L.thresholds().string());
  return 0;
}

int cmd_predict(const Options& o) {
  const RunConfig cfg = resolve(o);
  Layout L{o.out};
  Log log(L, "predict");
  log_config(log, cfg);
  const Dataset data = require_dataset(cfg);
  const Checkpoint ck = load_checkpoint(o.checkpoint.empty() ? L.latest_checkpoint() : fs::path(o.checkpoint));
  const auto& model = *ck.model;
  const auto thresholds = thresholds_for(cfg, L, model);
  const auto ranking = ranking_for(L, model);
  const auto items = data.indices(parse_split(o.split));
  const auto scores = score_dataset(model, data, items, cfg.train.eval_batch_size, cfg.train.tau);
  const std::string tag = dataset_id(cfg.dataset) + "_" + o.split;
  write_score_matrix(L.tables() / ("scores_" + tag + ".csv"), L.tables() / ("visibility_" + tag + ".csv"), scores,
                     model.attribute_names());
  const auto decisions = fuse(scores, ranking, thresholds, fusion_method(cfg.aggregator), cfg.p);
  std::string out = "image";
  for (const auto& a : model.attribute_names()) out += "," + a;
  out += "\n";
  for (std::size_t n = 0; n < decisions.size(); ++n) {
    out += scores.images[n];
    for (int d : decisions[n]) out += d ? ",1" : ",0";
    out += "\n";
  }
  const fs::path path = L.tables() / ("decisions_" + tag + "_" + cfg.aggregator + "_" +
                                      std::string(to_string(cfg.threshold_mode)) + ".csv");
  text::write_file(path, out);
  log("decisions for " + std::to_string(decisions.size()) + " images -> " + path.string());
  return 0;
}

void print_report(Log& log, const EvaluationReport& r) {
  for (const auto& m : r.methods) {
    const bool any = std::any_of(m.per_attribute.begin(), m.per_attribute.end(), [](const auto& v) { return v.has_value(); });
    log(m.method + " mean=" + (any ? text::format_fixed(100.0 * m.mean, 2) : std::string("n/a (no attributes kept)")));
  }
}

int cmd_eval(const Options& o) {
  Layout L{o.out};
  Log log(L, "eval");
  if (o.method == "prior") {
    fs::path attr = o.attributes_file, part = o.partition_file;
    if (attr.empty() || part.empty()) {
      if (o.data.empty()) throw MissingInput("prior evaluation needs --attributes and --partition, or --data");
      attr = fs::path(o.data) / Dataset::kAttributeFile;
      part = fs::path(o.data) / Dataset::kPartitionFile;
    }
    const auto set = join_splits(parse_attr_file(attr), parse_split_manifest(part));
    const auto prior = prior_baseline(set);
    EvaluationReport r;
    r.dataset = !o.name.empty() ? o.name : !o.data.empty() ? dataset_id(o.data) : dataset_id(attr.parent_path());
    r.mode = ThresholdMode::fixed;
    r.attributes = set.annotations.names;
    r.methods.push_back({"Prior", {prior.per_attribute.begin(), prior.per_attribute.end()}, prior.mean});
    emit_report(r, ReportFormat::csv, L.reports() / (r.dataset + "_prior.csv"));
    emit_report(r, ReportFormat::markdown, L.reports() / (r.dataset + "_prior.md"));
    for (std::size_t a = 0; a < r.attributes.size(); ++a)
      log(r.attributes[a] + " " + text::format_fixed(100.0 * prior.per_attribute[a], 2));
    log("Prior mean=" + text::format_fixed(100.0 * prior.mean, 2));
    return 0;
  }
  if (o.method != "all") throw ConfigError("--method must be all or prior");
  const RunConfig cfg = resolve(o);
  log_config(log, cfg);
  const Dataset data = require_dataset(cfg);
  const Checkpoint ck = load_checkpoint(o.checkpoint.empty() ? L.latest_checkpoint() : fs::path(o.checkpoint));
  const auto& model = *ck.model;
  const auto thresholds = thresholds_for(cfg, L, model);
  const auto ranking = ranking_for(L, model);
  const auto items = data.indices(parse_split(o.split));
  const auto scores = score_dataset(model, data, items, cfg.train.eval_batch_size, cfg.train.tau);
  const auto report = build_report(dataset_id(cfg.dataset), cfg.threshold_mode, model.attribute_names(), scores,
                                   labels_of(data, items), thresholds, ranking, prior_baseline(data.labels()), cfg.p);
  const std::string stem = dataset_id(cfg.dataset) + "_" + o.split + "_" + std::string(to_string(cfg.threshold_mode));
  emit_report(report, ReportFormat::csv, L.reports() / (stem + ".csv"));
  emit_report(report, ReportFormat::markdown, L.reports() / (stem + ".md"));
  print_report(log, report);
  log("report -> " + (L.reports() / (stem + ".csv")).string());
  return 0;
}

int cmd_cam(const Options& o) {
  const RunConfig cfg = resolve(o);
  Layout L{o.out};
  Log log(L, "cam");
  log_config(log, cfg);
  const Dataset data = require_dataset(cfg);
  const Checkpoint ck = load_checkpoint(o.checkpoint.empty() ? L.latest_checkpoint() : fs::path(o.checkpoint));
  const auto& model = *ck.model;
  const auto predictor = parse_predictor_name(o.predictor);
  if (!predictor) throw ConfigError("unknown predictor '" + o.predictor + "'");
  int attribute = 0;
  if (!o.attribute.empty()) {
    const auto& names = model.attribute_names();
    const auto it = std::find(names.begin(), names.end(), o.attribute);
    if (it == names.end()) throw ConfigError("unknown attribute '" + o.attribute + "'");
    attribute = static_cast<int>(it - names.begin());
  }

  int item = -1;
  if (o.image.empty()) {
    const auto test = data.indices(Split::test);
    if (test.empty()) throw MissingInput("no test image to visualise; pass --image");
    item = test.front();
  } else {
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data.name(i) == o.image) item = static_cast<int>(i);
    if (item < 0) throw MissingImage("image '" + o.image + "' is not in the dataset");
  }
  const std::vector<int> one{item};
  const auto batch = assemble_batch(data, one, {}, cfg.train.tau);
  // An occluded segment has no crop; let the geometry report which fiducials are missing.
  if (*predictor != kFullPredictor && *predictor != kGlobalPredictor && !batch.input.visible[0][*predictor])
    segment_box(data.fiducials(static_cast<std::size_t>(item)), segment_at(*predictor), cfg.train.tau);
  const nn::Tensor<float>& input = *predictor == kFullPredictor || *predictor == kGlobalPredictor
                                       ? batch.input.face
                                       : batch.input.segments[static_cast<std::size_t>(*predictor - 1)];
  const auto map = compute_cam(model, *predictor, attribute, input);

  const int S = input.dim(2);
  Image crop(S, S);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x)
        crop.at(x, y, c) = static_cast<std::uint8_t>(std::lround(255.0f * input.at(0, c, y, x)));
  const std::string stem = fs::path(data.name(static_cast<std::size_t>(item))).stem().string() + "_" +
                           predictor_name(*predictor) + "_" + model.attribute_names()[attribute];
  export_heatmap(map, crop, L.heatmaps() / (stem + ".pgm"), L.heatmaps() / (stem + "_overlay.ppm"));
  log("CAM " + predictor_name(*predictor) + "/" + model.attribute_names()[attribute] + " " +
      std::to_string(map.width) + "x" + std::to_string(map.height) + " range [" + text::format_fixed(map.min, 4) +
      ", " + text::format_fixed(map.max, 4) + "] -> " + (L.heatmaps() / (stem + ".pgm")).string());
  return 0;
}

int cmd_gradcheck(const Options& o) {
  Layout L{o.out};
  Log log(L, "gradcheck");
  Rng rng(o.seed.value_or(7));
  nn::Tensor<double> input({2, 3, 8, 8});
  for (auto& v : input.values()) v = rng.normal();
  nn::GradientCheckOptions opts;
  opts.seed = o.seed.value_or(7);
  const auto report = nn::gradient_check(nn::toy_network_spec(), input, o.tolerance, opts);
  for (const auto& p : report.parameters)
    log(p.name + " entries=" + std::to_string(p.entries) + " max_rel_err=" + text::format_fixed(p.max_relative_error, 10));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", report.max_relative_error);
  log(std::string("max relative error ") + buf + " (" + report.worst_parameter + ")");
  return 0;
}

int cmd_report(const Options& o) {
  Layout L{o.out};
  Log log(L, "report");
  const Checkpoint ck = load_checkpoint(o.checkpoint.empty() ? L.latest_checkpoint() : fs::path(o.checkpoint));
  const auto& names = ck.model->attribute_names();
  const auto ranking = read_ranking_file(L.stage1_ranking(), names);
  const auto grid = build_ranking_table(ranking, ck.model->mask(), names);
  write_ranking_grid(L.reports() / "ranking_grid.csv", grid, ReportFormat::csv);
  write_ranking_grid(L.reports() / "ranking_grid.md", grid, ReportFormat::markdown);
  for (int i = 0; i < kPredictorCount; ++i)
    log(predictor_name(i) + " assigned=" + std::to_string(grid.assigned[i]));
  log("ranking grid -> " + (L.reports() / "ranking_grid.csv").string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // Keep large tensor buffers in the heap instead of fresh mmaps per batch.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"Partial-face attribute detection: segments, two-stage training, committee fusion"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* s, bool data = true) {
    s->add_option("--out", o.out, "Output directory");
    s->add_option("--config", o.config, "Run configuration file");
    s->add_option("--seed", o.seed, "Seed override");
    if (data) s->add_option("--data", o.data, "Dataset directory");
  };
  auto model_flags = [&](CLI::App* s) {
    s->add_option("--width-scale", o.width_scale, "Channel width multiplier");
    s->add_option("--checkpoint", o.checkpoint, "Checkpoint (default: latest under --out)");
  };
  auto fusion_flags = [&](CLI::App* s) {
    s->add_option("--threshold-mode", o.threshold_mode, "optimal or fixed")
        ->check(CLI::IsMember({"optimal", "fixed"}));
    s->add_option("--aggregator", o.aggregator, "hrp, product or median")
        ->check(CLI::IsMember({"hrp", "product", "median"}));
    s->add_option("--split", o.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  };

  auto* synth = app.add_subcommand("synth", "Generate the bundled synthetic dataset");
  synth->add_option("--out", o.out, "Output directory");
  synth->add_option("--seed", o.seed, "Generator seed");
  synth->add_option("--train", o.synth_train, "Training images");
  synth->add_option("--val", o.synth_val, "Validation images");
  synth->add_option("--test", o.synth_test, "Test images");
  synth->add_option("--image-size", o.image_size, "Raster side in pixels");
  synth->add_option("--name", o.name, "Dataset directory name (default synthetic)");

  auto* partial = app.add_subcommand("gen-partial", "Write partial-face copies of a dataset");
  common(partial);
  partial->add_option("--variant", o.variant, "P-L12, P-L34, P-R12, P-R34, P-U12, P-U34 or all");

  auto* train = app.add_subcommand("train", "Two-stage training");
  common(train);
  model_flags(train);
  train->add_option("--stage", o.stage, "1, 2 or auto")->check(CLI::IsMember({"1", "2", "auto"}));
  train->add_option("--epochs1", o.epochs1, "Stage-1 epochs override");
  train->add_option("--epochs2", o.epochs2, "Stage-2 epochs override");
  train->add_option("--batch-size", o.batch_size, "Batch size override");

  auto* calibrate = app.add_subcommand("calibrate", "Fit thresholds and predictor ranking on validation");
  common(calibrate);
  model_flags(calibrate);

  auto* predict = app.add_subcommand("predict", "Score a split and write fused decisions");
  common(predict);
  model_flags(predict);
  fusion_flags(predict);

  auto* eval = app.add_subcommand("eval", "Accuracy report for every predictor and fusion method");
  common(eval);
  model_flags(eval);
  fusion_flags(eval);
  eval->add_option("--method", o.method, "all or prior")->check(CLI::IsMember({"all", "prior"}));
  eval->add_option("--attributes", o.attributes_file, "Attribute file (prior method)");
  eval->add_option("--partition", o.partition_file, "Split manifest (prior method)");
  eval->add_option("--name", o.name, "Dataset id used in report names");

  auto* cam = app.add_subcommand("cam", "Export a class activation map");
  common(cam);
  model_flags(cam);
  cam->add_option("--predictor", o.predictor, "FULL or a segment name");
  cam->add_option("--attribute", o.attribute, "Attribute name (default: first)");
  cam->add_option("--image", o.image, "Image name (default: first test image)");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the toy network");
  gradcheck->add_option("--out", o.out, "Output directory");
  gradcheck->add_option("--seed", o.seed, "Seed for input and coefficients");
  gradcheck->add_option("--tolerance", o.tolerance, "Largest accepted relative error");

  auto* report = app.add_subcommand("report", "Ranking grid of the pruned predictors");
  common(report, false);
  model_flags(report);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return cmd_synth(o);
    if (*partial) return cmd_gen_partial(o);
    if (*train) return cmd_train(o);
    if (*calibrate) return cmd_calibrate(o);
    if (*predict) return cmd_predict(o);
    if (*eval) return cmd_eval(o);
    if (*cam) return cmd_cam(o);
    if (*gradcheck) return cmd_gradcheck(o);
    if (*report) return cmd_report(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
