#include "mpdf/synthdata.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mpdf::synthdata {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'M', 'P', 'D', 'F'};
constexpr std::uint32_t kVersion = 1;

Eigen::MatrixXd gaussian(std::mt19937_64& rng, int rows, int cols, double sigma = 1.0) {
  std::normal_distribution<double> dist(0.0, sigma);
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

// Stationary unit-variance AR(1) trajectory, one latent vector per row.
Eigen::MatrixXd ar_trajectory(std::mt19937_64& rng, int length, int dim, double coeff) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd z(length, dim);
  double innov = std::sqrt(1.0 - coeff * coeff);
  for (int j = 0; j < dim; ++j) z(0, j) = dist(rng);
  for (int t = 1; t < length; ++t)
    for (int j = 0; j < dim; ++j) z(t, j) = coeff * z(t - 1, j) + innov * dist(rng);
  return z;
}

void quantize_to_f32(Eigen::MatrixXd& m) {
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) m(i, j) = double(float(m(i, j)));
}

std::vector<Segment> draw_partial_segments(std::mt19937_64& rng, int T_v) {
  if (T_v < 16) throw std::invalid_argument("PARTIAL segments are infeasible for T_v < 16");
  int min_len = std::max(1, (T_v * 5) / 100);
  int max_len = std::max(min_len, (T_v * 15) / 100);
  std::uniform_int_distribution<int> count_dist(1, 3);
  std::uniform_int_distribution<int> len_dist(min_len, max_len);
  int want = count_dist(rng);
  std::vector<Segment> segs;
  for (int s = 0; s < want; ++s) {
    int len = len_dist(rng);
    std::uniform_int_distribution<int> start_dist(0, T_v - len);
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      int start = start_dist(rng);
      int end = start + len;
      bool clash = false;
      for (const auto& [s0, e0] : segs)
        if (start < e0 + 1 && s0 < end + 1) clash = true;  // keep a 1-frame gap
      if (!clash) {
        segs.emplace_back(start, end);
        placed = true;
      }
    }
  }
  std::sort(segs.begin(), segs.end());
  return segs;
}

std::vector<int> shuffled_indices(std::mt19937_64& rng, int begin, int end) {
  std::vector<int> idx(end - begin);
  for (int i = begin; i < end; ++i) idx[i - begin] = i;
  // re-draw until the order actually changes
  for (int attempt = 0; attempt < 32; ++attempt) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (size_t i = 0; i < idx.size(); ++i)
      if (idx[i] != begin + int(i)) return idx;
  }
  return idx;
}

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

void write_f32_matrix(std::ofstream& out, const Eigen::MatrixXd& m) {
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) {
      float f = float(m(i, j));
      out.write(reinterpret_cast<const char*>(&f), sizeof f);
    }
}

Eigen::MatrixXd read_f32_matrix(std::ifstream& in, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      float f = 0;
      in.read(reinterpret_cast<char*>(&f), sizeof f);
      m(i, j) = double(f);
    }
  return m;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 over the combined value
  std::uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

}  // namespace

StreamMaps make_stream_maps(const GeneratorConfig& config) {
  std::mt19937_64 rng(config.map_seed);
  StreamMaps maps;
  int k = config.latent_dim;
  // Columns scaled so observations have O(1) variance regardless of k.
  double scale = 1.0 / std::sqrt(double(k));
  maps.W_v = gaussian(rng, config.D_v, k) * scale;
  maps.b_v = gaussian(rng, config.D_v, 1) * 0.1;
  maps.W_a = gaussian(rng, config.B, k) * scale;
  maps.b_a = gaussian(rng, config.B, 1) * 0.1;
  maps.audio_step_offsets = gaussian(rng, config.r, config.B) * 0.1;
  return maps;
}

bool valid_category(const std::string& category) {
  static const std::vector<std::string> known = {"RVRA",    "RVFA",    "FVRA",   "FVFA",
                                                 "PARTIAL", "INTRA_V", "INTRA_A"};
  return std::find(known.begin(), known.end(), category) != known.end();
}

SyntheticSample generate_sample(const GeneratorConfig& config, std::uint64_t seed,
                                const std::string& category) {
  config.validate();
  if (!valid_category(category)) throw std::invalid_argument("unknown category '" + category + "'");

  const int T = config.T_v, k = config.latent_dim, r = config.r;
  const int Ta = r * T;
  StreamMaps maps = make_stream_maps(config);
  std::mt19937_64 rng(seed);

  Eigen::MatrixXd z = ar_trajectory(rng, T, k, config.ar_coeff);

  SyntheticSample sample;
  sample.r = r;
  {
    std::ostringstream id;
    id << category << "-" << std::hex << seed;
    sample.sample_id = id.str();
  }

  // Per-frame latents actually driving each stream. Audio additionally keeps
  // a per-step latent grid to support step-level manipulation.
  Eigen::MatrixXd vis_latent = z;
  Eigen::MatrixXd aud_step_latent(Ta, k);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < r; ++j) aud_step_latent.row(t * r + j) = z.row(t);

  auto replace_frames = [&](Eigen::MatrixXd& latent, int start, int end) {
    Eigen::MatrixXd fake = ar_trajectory(rng, end - start, k, config.ar_coeff_fake);
    latent.middleRows(start, end - start) = fake;
  };
  auto replace_audio_frames = [&](int start, int end) {
    Eigen::MatrixXd fake = ar_trajectory(rng, end - start, k, config.ar_coeff_fake);
    for (int t = start; t < end; ++t)
      for (int j = 0; j < r; ++j) aud_step_latent.row(t * r + j) = fake.row(t - start);
  };

  if (category == "RVRA") {
    sample.label = 0;
  } else if (category == "RVFA" || category == "FVRA" || category == "FVFA") {
    sample.segments = {{0, T}};
    sample.label = 1;
    sample.audio_fake = (category != "FVRA");
    sample.visual_fake = (category != "RVFA");
    if (sample.audio_fake) replace_audio_frames(0, T);
    if (sample.visual_fake) replace_frames(vis_latent, 0, T);
  } else if (category == "PARTIAL") {
    sample.segments = draw_partial_segments(rng, T);
    sample.label = 1;
    std::uniform_int_distribution<int> mode_dist(0, 2);  // 0 audio, 1 visual, 2 both
    int mode = mode_dist(rng);
    sample.audio_fake = (mode == 0 || mode == 2);
    sample.visual_fake = (mode == 1 || mode == 2);
    for (const auto& [s, e] : sample.segments) {
      if (sample.audio_fake) replace_audio_frames(s, e);
      if (sample.visual_fake) replace_frames(vis_latent, s, e);
    }
  } else if (category == "INTRA_V") {
    // Frame order shuffled; both streams follow the shuffled latent so
    // per-frame audio-visual correspondence is preserved.
    sample.segments = {{0, T}};
    sample.label = 1;
    sample.visual_fake = true;
    std::vector<int> perm = shuffled_indices(rng, 0, T);
    Eigen::MatrixXd shuffled(T, k);
    for (int t = 0; t < T; ++t) shuffled.row(t) = z.row(perm[t]);
    vis_latent = shuffled;
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < r; ++j) aud_step_latent.row(t * r + j) = shuffled.row(t);
  } else if (category == "INTRA_A") {
    // Audio-step-level shuffle; the visual stream follows the per-frame mean
    // of the shuffled step latents, again preserving correspondence.
    sample.segments = {{0, T}};
    sample.label = 1;
    sample.audio_fake = true;
    std::vector<int> perm = shuffled_indices(rng, 0, Ta);
    Eigen::MatrixXd shuffled(Ta, k);
    for (int m = 0; m < Ta; ++m) shuffled.row(m) = aud_step_latent.row(perm[m]);
    aud_step_latent = shuffled;
    for (int t = 0; t < T; ++t) {
      Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(k);
      for (int j = 0; j < r; ++j) mean += aud_step_latent.row(t * r + j);
      vis_latent.row(t) = mean / double(r);
    }
  }

  // Non-INTRA_A audio follows its per-frame latent (constant over the r steps
  // of a frame); the step offsets and noise make steps distinguishable.
  sample.visual_raw =
      (vis_latent * maps.W_v.transpose()).rowwise() + maps.b_v.transpose();
  sample.visual_raw += gaussian(rng, T, config.D_v, config.noise);

  sample.audio_raw =
      (aud_step_latent * maps.W_a.transpose()).rowwise() + maps.b_a.transpose();
  for (int m = 0; m < Ta; ++m) sample.audio_raw.row(m) += maps.audio_step_offsets.row(m % r);
  sample.audio_raw += gaussian(rng, Ta, config.B, config.noise);

  quantize_to_f32(sample.visual_raw);
  quantize_to_f32(sample.audio_raw);
  return sample;
}

std::vector<int> frame_labels_from_segments(const std::vector<Segment>& segments, int T_v) {
  std::vector<int> labels(T_v, 0);
  for (const auto& [s, e] : segments)
    for (int t = std::max(0, s); t < std::min(T_v, e); ++t) labels[t] = 1;
  return labels;
}

void save_sample(const SyntheticSample& sample, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write sample file " + path);
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, std::uint32_t(sample.visual_raw.rows()));
  write_u32(out, std::uint32_t(sample.visual_raw.cols()));
  write_u32(out, std::uint32_t(sample.audio_raw.cols()));
  write_u32(out, std::uint32_t(sample.r));
  write_u32(out, std::uint32_t(sample.label));
  write_u32(out, std::uint32_t(sample.audio_fake));
  write_u32(out, std::uint32_t(sample.visual_fake));
  write_u32(out, std::uint32_t(sample.segments.size()));
  for (const auto& [s, e] : sample.segments) {
    write_u32(out, std::uint32_t(s));
    write_u32(out, std::uint32_t(e));
  }
  write_u32(out, std::uint32_t(sample.sample_id.size()));
  out.write(sample.sample_id.data(), std::streamsize(sample.sample_id.size()));
  write_f32_matrix(out, sample.visual_raw);
  write_f32_matrix(out, sample.audio_raw);
  if (!out) throw std::runtime_error("short write to " + path);
}

SyntheticSample load_sample(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open sample file " + path);
  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error(path + " is not a sample file (bad magic)");
  if (read_u32(in) != kVersion) throw std::runtime_error(path + ": unsupported version");
  int T = int(read_u32(in));
  int D_v = int(read_u32(in));
  int B = int(read_u32(in));
  SyntheticSample sample;
  sample.r = int(read_u32(in));
  sample.label = int(read_u32(in));
  sample.audio_fake = read_u32(in) != 0;
  sample.visual_fake = read_u32(in) != 0;
  int nseg = int(read_u32(in));
  for (int i = 0; i < nseg; ++i) {
    int s = int(read_u32(in));
    int e = int(read_u32(in));
    sample.segments.emplace_back(s, e);
  }
  int id_len = int(read_u32(in));
  sample.sample_id.resize(size_t(id_len));
  in.read(sample.sample_id.data(), id_len);
  sample.visual_raw = read_f32_matrix(in, T, D_v);
  sample.audio_raw = read_f32_matrix(in, sample.r * T, B);
  if (!in) throw std::runtime_error("truncated sample file " + path);
  return sample;
}

std::vector<ManifestEntry> DatasetManifest::split_entries(const std::string& split) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(e);
  return out;
}

DatasetManifest generate_dataset(const GeneratorConfig& config, int n_per_category,
                                 const std::vector<double>& split_ratios, std::uint64_t seed,
                                 const std::string& out_dir) {
  config.validate();
  if (n_per_category < 1) throw std::invalid_argument("n_per_category must be >= 1");
  if (split_ratios.size() != 2) throw std::invalid_argument("split_ratios must be {train, test}");
  double total = split_ratios[0] + split_ratios[1];
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split ratios must sum to 1");

  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "samples", ec);
  if (ec || !fs::is_directory(fs::path(out_dir) / "samples"))
    throw std::runtime_error("cannot create output directory " + out_dir);

  DatasetManifest manifest;
  manifest.generator_config = config;
  manifest.seed = seed;
  manifest.root_dir = out_dir;

  int n_train = int(double(n_per_category) * split_ratios[0]);  // floor; remainder to test
  for (size_t c = 0; c < config.categories.size(); ++c) {
    const std::string& category = config.categories[c];
    for (int i = 0; i < n_per_category; ++i) {
      std::uint64_t sample_seed = mix_seed(seed, mix_seed(c + 1, std::uint64_t(i)));
      SyntheticSample sample = generate_sample(config, sample_seed, category);
      std::string rel = "samples/" + sample.sample_id + ".bin";
      save_sample(sample, (fs::path(out_dir) / rel).string());
      ManifestEntry entry;
      entry.sample_id = sample.sample_id;
      entry.file_path = rel;
      entry.label = sample.label;
      entry.category = category;
      entry.split = (i < n_train) ? "train" : "test";
      manifest.entries.push_back(std::move(entry));
    }
  }
  save_manifest(manifest, (fs::path(out_dir) / "manifest.jsonl").string());
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path);
  json meta{{"type", "meta"},
            {"generator_config", json::parse(manifest.generator_config.to_json())},
            {"seed", manifest.seed}};
  out << meta.dump() << "\n";
  for (const auto& e : manifest.entries) {
    json line{{"type", "entry"},     {"sample_id", e.sample_id}, {"file_path", e.file_path},
              {"label", e.label},    {"category", e.category},   {"split", e.split}};
    out << line.dump() << "\n";
  }
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path);
  DatasetManifest manifest;
  manifest.root_dir = fs::path(path).parent_path().string();
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    std::string type = j.value("type", "entry");
    if (type == "meta") {
      manifest.generator_config = GeneratorConfig::from_json(j.at("generator_config").dump());
      manifest.seed = j.value("seed", std::uint64_t(0));
    } else {
      ManifestEntry e;
      e.sample_id = j.at("sample_id").get<std::string>();
      e.file_path = j.at("file_path").get<std::string>();
      e.label = j.at("label").get<int>();
      e.category = j.at("category").get<std::string>();
      e.split = j.at("split").get<std::string>();
      manifest.entries.push_back(std::move(e));
    }
  }
  return manifest;
}

}  // namespace mpdf::synthdata
