#include "mpdf/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mpdf/trainer.hpp"

namespace mpdf::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string manifest_path(const std::string& data) {
  fs::path p(data);
  if (fs::is_directory(p)) p /= "manifest.jsonl";
  return p.string();
}

// Model dimensions must agree with the dataset the model consumes.
void adopt_data_dims(ModelConfig& cfg, const synthdata::DatasetManifest& manifest) {
  cfg.T_v = manifest.generator_config.T_v;
  cfg.D_v = manifest.generator_config.D_v;
  cfg.B = manifest.generator_config.B;
  cfg.r = manifest.generator_config.r;
}

struct ModelFlags {
  std::string config_path;
  int f = -1, w = -1, N = -1, L = -1, epochs = -1, batch_size = -1;
  double lr = -1;
  std::int64_t seed = -1;
  std::string feature_set, attention_kind;
  bool no_contrastive = false, pooled = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "model config JSON file");
    cmd->add_option("--f", f, "feature width");
    cmd->add_option("--w", w, "window attention kernel size (odd)");
    cmd->add_option("--N", N, "conv attention depth");
    cmd->add_option("--L", L, "feature mixing levels");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--batch-size", batch_size, "batch size");
    cmd->add_option("--lr", lr, "learning rate");
    cmd->add_option("--seed", seed, "training seed");
    cmd->add_option("--feature-set", feature_set, "subset of CVA, e.g. CVA, V, VA");
    cmd->add_option("--attention", attention_kind,
                    "convolutional | transformer-1 | transformer-3");
    cmd->add_flag("--no-contrastive", no_contrastive, "disable the contrastive loss");
    cmd->add_flag("--pooled", pooled, "temporal max-pool before the classification head");
  }

  ModelConfig resolve() const {
    ModelConfig cfg;
    if (!config_path.empty()) cfg = ModelConfig::load(config_path);
    if (f > 0) cfg.f = f;
    if (w > 0) cfg.w = w;
    if (N > 0) cfg.N = N;
    if (L > 0) cfg.L = L;
    if (epochs >= 0) cfg.epochs = epochs;
    if (batch_size > 0) cfg.batch_size = batch_size;
    if (lr > 0) cfg.learning_rate = lr;
    if (seed >= 0) cfg.seed = std::uint64_t(seed);
    if (!feature_set.empty()) cfg.feature_set = feature_set;
    if (!attention_kind.empty()) cfg.attention_kind = attention_kind;
    if (no_contrastive) cfg.contrastive_enabled = false;
    if (pooled) cfg.pooled_classifier = true;
    return cfg;
  }
};

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

json result_to_json(const train::TrainResult& result) {
  json j;
  j["best_epoch"] = result.best_epoch;
  j["best_metrics"] = result.best_metrics;
  j["checkpoint"] = result.checkpoint_path;
  j["metrics_csv"] = result.metrics_csv_path;
  return j;
}

void dump_proposals(const std::string& path,
                    const std::map<std::string, std::vector<heads::Proposal>>& by_sample) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write proposals " + path);
  out.precision(10);
  for (const auto& [id, props] : by_sample)
    for (const auto& p : props) {
      json line{{"sample_id", id}, {"start", p.start}, {"end", p.end}, {"score", p.score}};
      out << line.dump() << "\n";
    }
}

// ---- subcommand bodies ----

int cmd_generate_data(const std::string& config_path, const std::string& out_dir,
                      std::uint64_t seed, int n_per_category, double train_ratio,
                      const std::string& categories) {
  GeneratorConfig cfg;
  if (!config_path.empty()) cfg = GeneratorConfig::load(config_path);
  if (!categories.empty()) {
    cfg.categories.clear();
    std::stringstream ss(categories);
    std::string item;
    while (std::getline(ss, item, ',')) cfg.categories.push_back(item);
  }
  auto manifest =
      synthdata::generate_dataset(cfg, n_per_category, {train_ratio, 1.0 - train_ratio}, seed,
                                  out_dir);
  std::cout << "wrote " << manifest.entries.size() << " samples to " << out_dir << std::endl;
  return 0;
}

int cmd_train(const std::string& task, const ModelFlags& flags, const std::string& data,
              const std::string& out_dir, bool dump_test_proposals) {
  auto manifest = synthdata::load_manifest(manifest_path(data));
  ModelConfig cfg = flags.resolve();
  adopt_data_dims(cfg, manifest);
  cfg.validate();
  fs::create_directories(out_dir);
  cfg.save((fs::path(out_dir) / "config.json").string());

  auto data_set = train::load_dataset<float>(manifest);
  train::TrainResult result;
  if (task == "cls") {
    model::ClassifierModel<float> m(cfg);
    result = train::train_classifier<float>(m, data_set, out_dir, true);
  } else {
    model::LocalizerModel<float> m(cfg);
    result = train::train_localizer<float>(m, data_set, out_dir, true);
    if (dump_test_proposals && !data_set.test.empty()) {
      auto ckpt = train::read_checkpoint(result.checkpoint_path);
      train::apply_checkpoint(ckpt, m.params());
      std::map<std::string, std::vector<heads::Proposal>> by_sample;
      for (const auto& s : data_set.test)
        by_sample[s.id] = eval::nms(m.predict(s).proposals, cfg.nms_iou);
      dump_proposals((fs::path(out_dir) / "proposals.jsonl").string(), by_sample);
    }
  }
  write_json((fs::path(out_dir) / "result.json").string(), result_to_json(result));
  std::cout << "best epoch " << result.best_epoch << ":";
  for (const auto& [k, v] : result.best_metrics) std::cout << "  " << k << " " << v;
  std::cout << std::endl;
  return 0;
}

int cmd_eval(const std::string& proposals_path, const std::string& manifest_arg,
             const std::string& out_path, const std::string& split, double nms_iou) {
  auto manifest = synthdata::load_manifest(manifest_path(manifest_arg));
  std::map<std::string, std::vector<eval::Interval>> gts;
  for (const auto& e : manifest.entries) {
    if (split != "all" && e.split != split) continue;
    auto sample = synthdata::load_sample((fs::path(manifest.root_dir) / e.file_path).string());
    auto& g = gts[e.sample_id];
    for (const auto& [a, b] : sample.segments) g.push_back({double(a), double(b)});
  }
  if (gts.empty()) throw std::runtime_error("no samples in split '" + split + "'");

  std::map<std::string, std::vector<heads::Proposal>> proposals;
  std::ifstream in(proposals_path);
  if (!in) throw std::runtime_error("cannot open proposals " + proposals_path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    std::string id = j.at("sample_id").get<std::string>();
    if (!gts.count(id)) continue;  // proposals outside the split are ignored
    proposals[id].push_back(
        {j.at("start").get<double>(), j.at("end").get<double>(), j.at("score").get<double>()});
  }
  for (auto& [id, props] : proposals) props = eval::nms(props, nms_iou);

  auto result = eval::localization_metrics(proposals, gts);
  std::size_t n_gt = 0;
  for (const auto& [id, g] : gts) n_gt += g.size();
  json report{{"ap50", result.ap.at(0.5)},
              {"ap75", result.ap.at(0.75)},
              {"ap95", result.ap.at(0.95)},
              {"map", result.map_mean},
              {"n_samples", gts.size()},
              {"n_gt_segments", n_gt},
              {"nms_iou", nms_iou},
              {"split", split}};
  if (!out_path.empty()) write_json(out_path, report);
  std::cout << report.dump(2) << std::endl;
  return 0;
}

int cmd_ablate(const std::string& grid_name, const ModelFlags& flags, const std::string& data,
               const std::string& out_dir, std::string task) {
  auto manifest = synthdata::load_manifest(manifest_path(data));
  ModelConfig base = flags.resolve();
  adopt_data_dims(base, manifest);

  std::vector<train::AblationCell> grid;
  if (grid_name == "kernel") {
    if (task.empty()) task = "loc";
    for (int w : {1, 3, 5, 7, 9, 11, 13, 15}) {
      ModelConfig c = base;
      c.w = w;
      grid.push_back({"w" + std::to_string(w), c});
    }
  } else if (grid_name == "depth") {
    if (task.empty()) task = "loc";
    for (int n : {2, 3, 4, 5}) {
      ModelConfig c = base;
      c.N = n;
      grid.push_back({"N" + std::to_string(n), c});
    }
  } else if (grid_name == "attention") {
    if (task.empty()) task = "loc";
    for (const char* kind : {"convolutional", "transformer-1", "transformer-3"}) {
      ModelConfig c = base;
      c.attention_kind = kind;
      grid.push_back({kind, c});
    }
  } else if (grid_name == "features") {
    if (task.empty()) task = "cls";
    auto cell = [&](const std::string& name, const std::string& set, bool contrastive) {
      ModelConfig c = base;
      c.feature_set = set;
      c.contrastive_enabled = contrastive;
      grid.push_back({name, c});
    };
    cell("only_C", "C", true);
    cell("only_V", "V", true);
    cell("only_A", "A", true);
    cell("V+A", "VA", true);
    cell("no_contrastive", "CVA", false);
    cell("full", "CVA", true);
  } else {
    throw std::invalid_argument("unknown grid '" + grid_name +
                                "' (expected kernel|depth|attention|features)");
  }
  for (auto& cell : grid) cell.config.validate();

  fs::create_directories(out_dir);
  std::string csv = (fs::path(out_dir) / ("ablation_" + grid_name + ".csv")).string();
  train::run_ablation<float>(grid, manifest, task, csv, true);
  std::cout << "wrote " << csv << std::endl;
  return 0;
}

// ---- heatmap export ----

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(8);
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << "\n";
  }
}

// Channels x time heatmap, fixed color scale [0, 0.3], simple hot colormap.
void write_heatmap_ppm(const std::string& path, const Eigen::MatrixXd& diff, double vmax) {
  const int scale = 4;
  int rows = int(diff.cols()) * scale;  // channels vertical
  int cols = int(diff.rows()) * scale;  // time horizontal
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P6\n" << cols << " " << rows << "\n255\n";
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      double v = diff(x / scale, y / scale);
      double s = std::clamp(v / vmax, 0.0, 1.0);
      auto channel = [](double u) {
        return static_cast<unsigned char>(std::clamp(u, 0.0, 1.0) * 255.0);
      };
      unsigned char rgb[3] = {channel(3 * s), channel(3 * s - 1), channel(3 * s - 2)};
      out.write(reinterpret_cast<const char*>(rgb), 3);
    }
  }
}

struct GridStats {
  double mean = 0, fake_mean = 0, real_mean = 0;
};

GridStats grid_stats(const Eigen::MatrixXd& diff, const std::vector<int>& frame_labels) {
  GridStats s;
  s.mean = diff.mean();
  double fake_acc = 0, real_acc = 0;
  int n_fake = 0, n_real = 0;
  for (int t = 0; t < diff.rows(); ++t) {
    double row = diff.row(t).mean();
    if (frame_labels[size_t(t)]) {
      fake_acc += row;
      ++n_fake;
    } else {
      real_acc += row;
      ++n_real;
    }
  }
  s.fake_mean = n_fake ? fake_acc / n_fake : 0.0;
  s.real_mean = n_real ? real_acc / n_real : 0.0;
  return s;
}

void export_grids(const model::BackboneOut<float>& bb, const model::LoadedSample<float>& sample,
                  const std::string& out_dir) {
  fs::create_directories(out_dir);
  json summary;
  summary["sample_id"] = sample.id;
  summary["label"] = sample.label;
  summary["audio_fake"] = sample.audio_fake;
  summary["visual_fake"] = sample.visual_fake;
  json segs = json::array();
  for (const auto& [a, b] : sample.segments) segs.push_back({a, b});
  summary["segments"] = segs;

  auto emit = [&](const char* name, const mp::MaskedPredOutput<float>& mod) {
    Eigen::MatrixXd diff =
        (mod.predicted->val - mod.actual->val).cwiseAbs().cast<double>();
    write_matrix_csv((fs::path(out_dir) / (std::string(name) + "_diff.csv")).string(), diff);
    Eigen::MatrixXd frame_mean = diff.rowwise().mean();
    write_matrix_csv((fs::path(out_dir) / (std::string(name) + "_frame_mean.csv")).string(),
                     frame_mean);
    write_heatmap_ppm((fs::path(out_dir) / (std::string(name) + "_heatmap.ppm")).string(), diff,
                      0.3);
    GridStats s = grid_stats(diff, sample.frame_labels);
    summary[name] = {{"mean", s.mean},
                     {"fake_frame_mean", s.fake_mean},
                     {"real_frame_mean", s.real_mean},
                     {"fake_to_real_ratio", s.real_mean > 0 ? s.fake_mean / s.real_mean : 0.0}};
  };
  if (bb.has_cross) emit("cross", bb.cross);
  if (bb.has_visual) emit("visual", bb.visual);
  if (bb.has_audio) emit("audio", bb.audio);
  write_json((fs::path(out_dir) / "summary.json").string(), summary);
  std::cout << "wrote heatmap grids to " << out_dir << std::endl;
}

int cmd_export_heatmaps(const std::string& checkpoint_path, const std::string& sample_path,
                        const std::string& out_dir) {
  auto ckpt = train::read_checkpoint(checkpoint_path);
  auto sample = synthdata::load_sample(sample_path);
  ModelConfig cfg = ckpt.config;
  if (cfg.D_v != sample.visual_raw.cols() || cfg.B != sample.audio_raw.cols() ||
      cfg.r != sample.r)
    throw std::runtime_error("config mismatch between checkpoint and sample");
  auto loaded = model::load_for_model<float>(sample);

  model::BackboneOut<float> bb;
  if (ckpt.kind == "classifier") {
    model::ClassifierModel<float> m(cfg);
    train::apply_checkpoint(ckpt, m.params());
    ad::Tape<float> tape;
    bb = m.backbone_forward(tape, loaded);
    export_grids(bb, loaded, out_dir);
  } else if (ckpt.kind == "localizer") {
    model::LocalizerModel<float> m(cfg);
    train::apply_checkpoint(ckpt, m.params());
    ad::Tape<float> tape;
    bb = m.backbone_forward(tape, loaded);
    export_grids(bb, loaded, out_dir);
  } else {
    throw std::runtime_error("unknown checkpoint kind '" + ckpt.kind + "'");
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"masked next-frame prediction deepfake detector"};
  app.require_subcommand(1);

  // generate-data
  auto* gen = app.add_subcommand("generate-data", "generate a synthetic dataset");
  std::string gen_config, gen_out, gen_categories;
  std::int64_t gen_seed = 1;
  int gen_n = 10;
  double gen_train_ratio = 0.7;
  gen->add_option("--config", gen_config, "generator config JSON");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "dataset seed");
  gen->add_option("--n-per-category", gen_n, "samples per category");
  gen->add_option("--train-ratio", gen_train_ratio, "train split fraction");
  gen->add_option("--categories", gen_categories, "comma-separated category subset");

  // train-cls / train-loc
  ModelFlags cls_flags, loc_flags;
  std::string cls_data, cls_out, loc_data, loc_out;
  bool loc_dump = false;
  auto* tcls = app.add_subcommand("train-cls", "train the classification pipeline");
  cls_flags.attach(tcls);
  tcls->add_option("--data", cls_data, "dataset directory")->required();
  tcls->add_option("--out", cls_out, "output directory")->required();
  auto* tloc = app.add_subcommand("train-loc", "train the localization pipeline");
  loc_flags.attach(tloc);
  tloc->add_option("--data", loc_data, "dataset directory")->required();
  tloc->add_option("--out", loc_out, "output directory")->required();
  tloc->add_flag("--dump-proposals", loc_dump, "write test-split proposals of the best model");

  // eval
  auto* ev = app.add_subcommand("eval", "score a proposal file against ground truth");
  std::string ev_proposals, ev_manifest, ev_out, ev_split = "test";
  double ev_nms = 0.5;
  ev->add_option("--proposals", ev_proposals, "proposal JSONL file")->required();
  ev->add_option("--manifest", ev_manifest, "dataset directory or manifest path")->required();
  ev->add_option("--out", ev_out, "metrics report JSON path");
  ev->add_option("--split", ev_split, "split to evaluate (train|test|all)");
  ev->add_option("--nms-iou", ev_nms, "NMS IoU threshold");

  // ablate
  auto* ab = app.add_subcommand("ablate", "run an ablation grid");
  ModelFlags ab_flags;
  std::string ab_grid, ab_data, ab_out, ab_task;
  ab_flags.attach(ab);
  ab->add_option("--grid", ab_grid, "kernel | depth | attention | features")->required();
  ab->add_option("--data", ab_data, "dataset directory")->required();
  ab->add_option("--out", ab_out, "output directory")->required();
  ab->add_option("--task", ab_task, "cls | loc (defaults per grid)");

  // export-heatmaps
  auto* hm = app.add_subcommand("export-heatmaps",
                                "write |P - E| grids for the three masked-prediction modules");
  std::string hm_ckpt, hm_sample, hm_out;
  hm->add_option("--checkpoint", hm_ckpt, "trained checkpoint")->required();
  hm->add_option("--sample", hm_sample, "sample .bin file")->required();
  hm->add_option("--out", hm_out, "output directory")->required();

  std::vector<const char*> argv;
  argv.push_back("mpdf");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
    if (gen->parsed())
      return cmd_generate_data(gen_config, gen_out, std::uint64_t(gen_seed), gen_n,
                               gen_train_ratio, gen_categories);
    if (tcls->parsed()) return cmd_train("cls", cls_flags, cls_data, cls_out, false);
    if (tloc->parsed()) return cmd_train("loc", loc_flags, loc_data, loc_out, loc_dump);
    if (ev->parsed()) return cmd_eval(ev_proposals, ev_manifest, ev_out, ev_split, ev_nms);
    if (ab->parsed()) return cmd_ablate(ab_grid, ab_flags, ab_data, ab_out, ab_task);
    if (hm->parsed()) return cmd_export_heatmaps(hm_ckpt, hm_sample, hm_out);
    return 1;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
}

}  // namespace mpdf::cli
