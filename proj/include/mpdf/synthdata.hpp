#pragma once

// Synthetic labeled audio-visual feature sequences. A shared smooth latent
// trajectory drives both streams through fixed random linear maps; fakes
// replace stream segments with trajectories from an independent (and slightly
// jerkier) latent, or shuffle the latent order in place.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mpdf/config.hpp"

namespace mpdf::synthdata {

using Segment = std::pair<int, int>;  // [start, end) in visual frames

struct SyntheticSample {
  Eigen::MatrixXd visual_raw;  // T_v x D_v
  Eigen::MatrixXd audio_raw;   // T_a x B, T_a = r * T_v
  int label = 0;
  bool audio_fake = false;
  bool visual_fake = false;
  std::vector<Segment> segments;  // disjoint, sorted, within [0, T_v)
  std::string sample_id;
  int r = 4;
};

struct ManifestEntry {
  std::string sample_id;
  std::string file_path;  // relative to the dataset directory
  int label = 0;
  std::string category;
  std::string split;  // "train" | "test"
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  GeneratorConfig generator_config;
  std::uint64_t seed = 0;
  std::string root_dir;  // directory the manifest was loaded from / written to

  std::vector<ManifestEntry> split_entries(const std::string& split) const;
};

// Fixed latent-to-observation geometry shared by every sample of a dataset.
struct StreamMaps {
  Eigen::MatrixXd W_v;  // D_v x k
  Eigen::VectorXd b_v;
  Eigen::MatrixXd W_a;  // B x k
  Eigen::VectorXd b_a;
  Eigen::MatrixXd audio_step_offsets;  // r x B
};

StreamMaps make_stream_maps(const GeneratorConfig& config);

bool valid_category(const std::string& category);

SyntheticSample generate_sample(const GeneratorConfig& config, std::uint64_t seed,
                                const std::string& category);

// Writes samples to out_dir/samples/<id>.bin plus out_dir/manifest.jsonl.
// split_ratios = {train, test}; per category, floor(n * train) samples go to
// train and the remainder to test.
DatasetManifest generate_dataset(const GeneratorConfig& config, int n_per_category,
                                 const std::vector<double>& split_ratios, std::uint64_t seed,
                                 const std::string& out_dir);

// Frame t is 1 iff t lies inside some segment.
std::vector<int> frame_labels_from_segments(const std::vector<Segment>& segments, int T_v);

void save_sample(const SyntheticSample& sample, const std::string& path);
SyntheticSample load_sample(const std::string& path);

void save_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

}  // namespace mpdf::synthdata
