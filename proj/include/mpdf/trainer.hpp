#pragma once

// Training loops for both pipelines: balanced-batch gradient descent with
// Adam, per-epoch held-out evaluation, best-checkpoint retention, a
// finite-difference gradient checker, and the ablation grid runner.
// Execution is single-threaded and fully deterministic given (config, seed).

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "mpdf/eval.hpp"
#include "mpdf/model.hpp"

namespace mpdf::train {

using losses::LossBreakdown;
using model::LoadedSample;
using synthdata::DatasetManifest;

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

template <typename S>
class Adam {
 public:
  Adam(nn::ParamStore<S>& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : params_(params.all()), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* p : params_) {
      m_.push_back(ad::Mat<S>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(ad::Mat<S>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step() {
    ++t_;
    S b1 = S(beta1_), b2 = S(beta2_);
    S corr1 = S(1) - S(std::pow(beta1_, t_));
    S corr2 = S(1) - S(std::pow(beta2_, t_));
    S lr = S(lr_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& g = params_[i]->grad;
      m_[i] = b1 * m_[i] + (S(1) - b1) * g;
      v_[i] = (b2 * v_[i].array() + (S(1) - b2) * g.array().square()).matrix();
      auto mhat = m_[i].array() / corr1;
      auto vhat = v_[i].array() / corr2;
      params_[i]->value.array() -= lr * mhat / (vhat.sqrt() + S(eps_));
    }
  }

 private:
  std::vector<nn::Parameter<S>*> params_;
  std::vector<ad::Mat<S>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

struct CheckpointData {
  std::string kind;  // "classifier" | "localizer"
  ModelConfig config;
  std::vector<std::pair<std::string, Eigen::MatrixXd>> params;
};

namespace detail {
inline void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline void write_str(std::ofstream& out, const std::string& s) {
  write_u32(out, std::uint32_t(s.size()));
  out.write(s.data(), std::streamsize(s.size()));
}
inline std::string read_str(std::ifstream& in) {
  std::string s(read_u32(in), '\0');
  in.read(s.data(), std::streamsize(s.size()));
  return s;
}
}  // namespace detail

template <typename S>
void save_checkpoint(const std::string& path, const std::string& kind, const ModelConfig& cfg,
                     nn::ParamStore<S>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write("MPCK", 4);
  detail::write_u32(out, 1);
  detail::write_str(out, kind);
  detail::write_str(out, cfg.to_json());
  auto all = params.all();
  detail::write_u32(out, std::uint32_t(all.size()));
  for (auto* p : all) {
    detail::write_str(out, p->name);
    detail::write_u32(out, std::uint32_t(p->value.rows()));
    detail::write_u32(out, std::uint32_t(p->value.cols()));
    for (Eigen::Index i = 0; i < p->value.rows(); ++i)
      for (Eigen::Index j = 0; j < p->value.cols(); ++j) {
        double d = double(p->value(i, j));
        out.write(reinterpret_cast<const char*>(&d), sizeof d);
      }
  }
  if (!out) throw std::runtime_error("short write to checkpoint " + path);
}

inline CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[4];
  in.read(magic, 4);
  if (std::string(magic, 4) != "MPCK")
    throw std::runtime_error(path + " is not a checkpoint (bad magic)");
  if (detail::read_u32(in) != 1) throw std::runtime_error(path + ": unsupported version");
  CheckpointData ckpt;
  ckpt.kind = detail::read_str(in);
  ckpt.config = ModelConfig::from_json(detail::read_str(in));
  std::uint32_t n = detail::read_u32(in);
  for (std::uint32_t k = 0; k < n; ++k) {
    std::string name = detail::read_str(in);
    int rows = int(detail::read_u32(in)), cols = int(detail::read_u32(in));
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        double d = 0;
        in.read(reinterpret_cast<char*>(&d), sizeof d);
        m(i, j) = d;
      }
    ckpt.params.emplace_back(std::move(name), std::move(m));
  }
  if (!in) throw std::runtime_error("truncated checkpoint " + path);
  return ckpt;
}

template <typename S>
void apply_checkpoint(const CheckpointData& ckpt, nn::ParamStore<S>& params) {
  auto all = params.all();
  if (all.size() != ckpt.params.size())
    throw std::runtime_error("checkpoint parameter count mismatch");
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto& [name, value] = ckpt.params[i];
    if (all[i]->name != name || all[i]->value.rows() != value.rows() ||
        all[i]->value.cols() != value.cols())
      throw std::runtime_error("checkpoint layout mismatch at '" + name + "'");
    all[i]->value = value.cast<S>();
  }
}

// ---------------------------------------------------------------------------
// Data loading and batching
// ---------------------------------------------------------------------------

template <typename S>
struct Dataset {
  std::vector<LoadedSample<S>> train, test;
};

template <typename S>
Dataset<S> load_dataset(const DatasetManifest& manifest) {
  namespace fs = std::filesystem;
  Dataset<S> out;
  for (const auto& e : manifest.entries) {
    auto sample =
        synthdata::load_sample((fs::path(manifest.root_dir) / e.file_path).string());
    auto loaded = model::load_for_model<S>(sample, e.category);
    (e.split == "train" ? out.train : out.test).push_back(std::move(loaded));
  }
  return out;
}

struct DivergenceError : std::runtime_error {
  int epoch, step;
  DivergenceError(int epoch_, int step_, const std::string& sample)
      : std::runtime_error("non-finite loss at epoch " + std::to_string(epoch_) + ", step " +
                           std::to_string(step_) + " (sample " + sample + ")"),
        epoch(epoch_),
        step(step_) {}
};

inline bool deterministic_mode() {
  const char* v = std::getenv("MPDF_DETERMINISTIC");
  return v && std::string(v) == "1";
}

// Yields index batches with the real/fake balance the sampler maintains; if a
// class is missing the batches are plain shuffled slices.
class BalancedBatcher {
 public:
  BalancedBatcher(const std::vector<int>& labels, int batch_size, std::mt19937_64& rng)
      : labels_(labels), batch_size_(batch_size), rng_(rng) {
    for (std::size_t i = 0; i < labels.size(); ++i)
      (labels[i] ? fake_ : real_).push_back(i);
    balanced_ = !real_.empty() && !fake_.empty();
    reshuffle(real_);
    reshuffle(fake_);
  }

  int batches_per_epoch() const {
    return int((labels_.size() + std::size_t(batch_size_) - 1) / std::size_t(batch_size_));
  }

  std::vector<std::size_t> next_batch() {
    std::vector<std::size_t> batch;
    batch.reserve(std::size_t(batch_size_));
    if (!balanced_) {
      auto& pool = real_.empty() ? fake_ : real_;
      for (int i = 0; i < batch_size_; ++i) batch.push_back(draw(pool, pos_real_));
      return batch;
    }
    int half = batch_size_ / 2;
    for (int i = 0; i < half; ++i) batch.push_back(draw(real_, pos_real_));
    for (int i = 0; i < batch_size_ - half; ++i) batch.push_back(draw(fake_, pos_fake_));
    return batch;
  }

 private:
  void reshuffle(std::vector<std::size_t>& pool) { std::shuffle(pool.begin(), pool.end(), rng_); }
  std::size_t draw(std::vector<std::size_t>& pool, std::size_t& pos) {
    if (pos >= pool.size()) {
      reshuffle(pool);
      pos = 0;
    }
    return pool[pos++];
  }

  std::vector<int> labels_;
  std::vector<std::size_t> real_, fake_;
  std::size_t pos_real_ = 0, pos_fake_ = 0;
  int batch_size_;
  bool balanced_ = false;
  std::mt19937_64& rng_;
};

// ---------------------------------------------------------------------------
// Metrics helpers
// ---------------------------------------------------------------------------

template <typename S>
std::vector<double> classifier_scores(const model::ClassifierModel<S>& m,
                                      const std::vector<LoadedSample<S>>& samples) {
  std::vector<double> scores;
  scores.reserve(samples.size());
  for (const auto& s : samples) scores.push_back(m.predict_score(s));
  return scores;
}

template <typename S>
std::map<std::string, double> classifier_metrics(const model::ClassifierModel<S>& m,
                                                 const std::vector<LoadedSample<S>>& samples) {
  std::vector<double> scores = classifier_scores(m, samples);
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  std::map<std::string, double> out;
  out["acc"] = eval::accuracy(scores, labels);
  out["ap"] = eval::average_precision(scores, labels);
  out["auc"] = eval::roc_auc(scores, labels);
  return out;
}

template <typename S>
std::map<std::string, double> localizer_metrics(const model::LocalizerModel<S>& m,
                                                const std::vector<LoadedSample<S>>& samples) {
  std::map<std::string, std::vector<heads::Proposal>> proposals;
  std::map<std::string, std::vector<eval::Interval>> gts;
  for (const auto& s : samples) {
    auto pred = m.predict(s);
    proposals[s.id] = eval::nms(pred.proposals, m.config().nms_iou);
    auto& g = gts[s.id];
    for (const auto& [a, b] : s.segments) g.push_back({double(a), double(b)});
  }
  auto result = eval::localization_metrics(proposals, gts);
  return {{"ap50", result.ap.at(0.5)},
          {"ap75", result.ap.at(0.75)},
          {"ap95", result.ap.at(0.95)},
          {"map", result.map_mean}};
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

struct EpochLog {
  int epoch = 0;
  LossBreakdown mean_loss;
  std::map<std::string, double> metrics;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  int best_epoch = -1;
  std::map<std::string, double> best_metrics;
  std::string checkpoint_path;
  std::string metrics_csv_path;
};

namespace detail {

inline void write_metrics_csv(const std::string& path, const std::vector<EpochLog>& logs) {
  if (logs.empty()) return;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write metrics log " + path);
  out << "epoch";
  for (const auto& [k, v] : logs[0].mean_loss.components) out << "," << k;
  out << ",total";
  for (const auto& [k, v] : logs[0].metrics) out << "," << k;
  out << "\n";
  out.precision(10);
  for (const auto& log : logs) {
    out << log.epoch;
    for (const auto& [k, v] : log.mean_loss.components) out << "," << v;
    out << "," << log.mean_loss.total;
    for (const auto& [k, v] : log.metrics) out << "," << v;
    out << "\n";
  }
}

template <typename S, typename Model, typename EvalFn>
TrainResult train_loop(Model& m, const std::string& kind, const Dataset<S>& data,
                       const std::string& out_dir, const EvalFn& evaluate,
                       const std::string& select_metric, bool verbose) {
  namespace fs = std::filesystem;
  const ModelConfig& cfg = m.config();
  if (data.train.empty()) throw std::invalid_argument("training split is empty");
  fs::create_directories(out_dir);

  std::vector<int> labels;
  labels.reserve(data.train.size());
  for (const auto& s : data.train) labels.push_back(s.label);
  std::mt19937_64 rng(cfg.seed ^ 0x5eed5eedULL);
  BalancedBatcher batcher(labels, cfg.batch_size, rng);

  Adam<S> opt(m.params(), cfg.learning_rate);
  TrainResult result;
  result.checkpoint_path = (fs::path(out_dir) / "best.ckpt").string();
  result.metrics_csv_path = (fs::path(out_dir) / "metrics.csv").string();
  double best = -1.0;

  int global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    LossBreakdown accum;
    int n_samples = 0;
    int nb = batcher.batches_per_epoch();
    for (int b = 0; b < nb; ++b) {
      auto batch = batcher.next_batch();
      m.params().zero_grads();
      for (std::size_t idx : batch) {
        ad::Tape<S> tape;
        auto [loss, breakdown] = m.loss(tape, data.train[idx]);
        if (!std::isfinite(breakdown.total))
          throw DivergenceError(epoch, global_step, data.train[idx].id);
        tape.backward(ad::scale(tape, loss, S(1.0 / double(batch.size()))));
        accum.total += breakdown.total;
        for (const auto& [k, v] : breakdown.components) accum.components[k] += v;
        ++n_samples;
      }
      opt.step();
      ++global_step;
    }
    EpochLog log;
    log.epoch = epoch;
    log.mean_loss.total = accum.total / n_samples;
    for (const auto& [k, v] : accum.components) log.mean_loss.components[k] = v / n_samples;
    log.metrics = evaluate(m);
    result.epochs.push_back(log);

    double score = log.metrics.count(select_metric) ? log.metrics.at(select_metric) : 0.0;
    if (score > best) {
      best = score;
      result.best_epoch = epoch;
      result.best_metrics = log.metrics;
      save_checkpoint(result.checkpoint_path, kind, cfg, m.params());
    }
    if (verbose) {
      auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::cout << kind << " epoch " << epoch << ": loss " << log.mean_loss.total;
      for (const auto& [k, v] : log.metrics) std::cout << "  " << k << " " << v;
      std::cout << "  (" << secs << "s)" << std::endl;
    }
  }
  write_metrics_csv(result.metrics_csv_path, result.epochs);
  return result;
}

}  // namespace detail

template <typename S>
TrainResult train_classifier(model::ClassifierModel<S>& m, const Dataset<S>& data,
                             const std::string& out_dir, bool verbose = false) {
  auto evaluate = [&](const model::ClassifierModel<S>& mm) {
    return data.test.empty() ? std::map<std::string, double>{}
                             : classifier_metrics(mm, data.test);
  };
  return detail::train_loop<S>(m, "classifier", data, out_dir, evaluate, "auc", verbose);
}

template <typename S>
TrainResult train_localizer(model::LocalizerModel<S>& m, const Dataset<S>& data,
                            const std::string& out_dir, bool verbose = false) {
  auto evaluate = [&](const model::LocalizerModel<S>& mm) {
    return data.test.empty() ? std::map<std::string, double>{} : localizer_metrics(mm, data.test);
  };
  return detail::train_loop<S>(m, "localizer", data, out_dir, evaluate, "map", verbose);
}

// Convenience overloads working from a manifest on disk.
template <typename S>
TrainResult train_classifier(const ModelConfig& cfg, const DatasetManifest& manifest,
                             const std::string& out_dir, bool verbose = false) {
  auto data = load_dataset<S>(manifest);
  model::ClassifierModel<S> m(cfg);
  return train_classifier<S>(m, data, out_dir, verbose);
}

template <typename S>
TrainResult train_localizer(const ModelConfig& cfg, const DatasetManifest& manifest,
                            const std::string& out_dir, bool verbose = false) {
  auto data = load_dataset<S>(manifest);
  model::LocalizerModel<S> m(cfg);
  return train_localizer<S>(m, data, out_dir, verbose);
}

// ---------------------------------------------------------------------------
// Gradient checking (double precision)
// ---------------------------------------------------------------------------

struct GradCheckReport {
  std::map<std::string, double> per_group;  // parameter name -> relative error
  double worst = 0.0;
};

// Central finite differences of the given loss function against the tape
// gradients. Relative error is measured against each parameter group's
// gradient scale. loss_fn must rebuild its tape on every call.
template <typename LossFn>
GradCheckReport grad_check(nn::ParamStore<double>& params, const LossFn& loss_fn, double eps,
                           int coords_per_param, std::uint64_t seed) {
  params.zero_grads();
  loss_fn(true);  // one backward pass fills analytic gradients

  GradCheckReport report;
  std::mt19937_64 rng(seed);
  for (auto* p : params.all()) {
    double scale = std::max(1e-6, p->grad.cwiseAbs().maxCoeff());
    double dev = 0.0;
    int n = int(p->value.size());
    int k = std::min(coords_per_param, n);
    for (int c = 0; c < k; ++c) {
      int flat = int(rng() % std::uint64_t(n));
      Eigen::Index i = flat % p->value.rows();
      Eigen::Index j = flat / p->value.rows();
      double orig = p->value(i, j);
      p->value(i, j) = orig + eps;
      double up = loss_fn(false);
      p->value(i, j) = orig - eps;
      double down = loss_fn(false);
      p->value(i, j) = orig;
      double numeric = (up - down) / (2 * eps);
      double analytic = p->grad(i, j);
      dev = std::max(dev, std::abs(analytic - numeric));
      scale = std::max(scale, std::abs(numeric));
    }
    double err = dev / scale;
    report.per_group[p->name] = err;
    report.worst = std::max(report.worst, err);
  }
  return report;
}

template <typename Model, typename Sample>
GradCheckReport grad_check_model(Model& m, const Sample& sample, double eps,
                                 int coords_per_param = 4, std::uint64_t seed = 17) {
  auto loss_fn = [&](bool backward) {
    ad::Tape<double> tape;
    auto [loss, breakdown] = m.loss(tape, sample);
    if (backward) tape.backward(loss);
    return double(loss->val(0, 0));
  };
  return grad_check(m.params(), loss_fn, eps, coords_per_param, seed);
}

// ---------------------------------------------------------------------------
// Ablation grid
// ---------------------------------------------------------------------------

struct AblationCell {
  std::string name;
  ModelConfig config;
};

struct AblationRow {
  std::string name;
  ModelConfig config;
  std::map<std::string, double> metrics;
};

// Trains and evaluates every cell with the shared manifest; rows land in the
// CSV in grid order.
template <typename S>
std::vector<AblationRow> run_ablation(const std::vector<AblationCell>& grid,
                                      const DatasetManifest& manifest, const std::string& task,
                                      const std::string& out_csv, bool verbose = false) {
  namespace fs = std::filesystem;
  if (task != "cls" && task != "loc") throw std::invalid_argument("ablation task must be cls|loc");
  auto data = load_dataset<S>(manifest);
  std::vector<AblationRow> rows;
  for (const auto& cell : grid) {
    if (verbose) std::cout << "[ablate] cell " << cell.name << std::endl;
    std::string cell_dir =
        (fs::path(out_csv).parent_path() / ("ablate_" + cell.name)).string();
    AblationRow row;
    row.name = cell.name;
    row.config = cell.config;
    if (task == "cls") {
      model::ClassifierModel<S> m(cell.config);
      row.metrics = train_classifier<S>(m, data, cell_dir, verbose).best_metrics;
    } else {
      model::LocalizerModel<S> m(cell.config);
      row.metrics = train_localizer<S>(m, data, cell_dir, verbose).best_metrics;
    }
    rows.push_back(std::move(row));
  }

  std::ofstream out(out_csv);
  if (!out) throw std::runtime_error("cannot write ablation report " + out_csv);
  out << "cell,w,N,L,attention,feature_set,contrastive";
  if (!rows.empty())
    for (const auto& [k, v] : rows[0].metrics) out << "," << k;
  out << "\n";
  out.precision(10);
  for (const auto& row : rows) {
    out << row.name << "," << row.config.w << "," << row.config.N << "," << row.config.L << ","
        << row.config.attention_kind << "," << row.config.feature_set << ","
        << (row.config.contrastive_enabled ? 1 : 0);
    for (const auto& [k, v] : row.metrics) out << "," << v;
    out << "\n";
  }
  return rows;
}

}  // namespace mpdf::train
