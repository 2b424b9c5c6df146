#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mpdf {

// Architecture and training hyperparameters. Defaults are the desk-scale
// setup: f=32 features, window w=9, N=3 attention blocks, L=3 mixing levels.
struct ModelConfig {
  int f = 32;   // unimodal feature width (cross-modal streams use 2f)
  int w = 9;    // depthwise kernel size of the windowed attention
  int N = 3;    // stacked convolutional attention blocks
  int L = 3;    // feature mixing levels
  int r = 4;    // audio steps per visual frame
  int T_v = 64;
  int D_v = 48;
  int B = 64;
  int groupnorm_groups = 8;
  int heads = 4;
  int enc_layers = 3;
  int dec_layers = 3;
  int encoder_hidden = 64;

  double margin = 1.0;  // contrastive margin m
  double lambda_reg = 2.0;
  double lambda_rec = 1.0;
  double lambda_scls = 0.1;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;

  double learning_rate = 1e-3;
  int batch_size = 16;
  int epochs = 5;
  std::uint64_t seed = 1;

  std::string feature_set = "CVA";  // subset of {C,V,A}
  bool contrastive_enabled = true;
  // "convolutional" | "transformer-1" | "transformer-3"
  std::string attention_kind = "convolutional";
  bool pooled_classifier = false;
  int pooled_length = 16;

  // proposal decoding / evaluation
  double score_threshold = 0.1;
  int pre_nms_topk = 64;
  double nms_iou = 0.5;

  // When false, the heads accept sequences shorter than their production
  // minima (16 for classification, 32 for localization); used by the
  // double-precision gradient checks which run at T=8.
  bool enforce_min_length = true;

  void validate() const;

  bool uses_feature(char which) const { return feature_set.find(which) != std::string::npos; }
  bool full_feature_set() const {
    return uses_feature('C') && uses_feature('V') && uses_feature('A');
  }

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  static ModelConfig load(const std::string& path);
  void save(const std::string& path) const;
};

// Synthetic data generation parameters. The fixed cross-modal maps are drawn
// from map_seed so every sample of a dataset shares one latent-to-observation
// geometry.
struct GeneratorConfig {
  int T_v = 64;
  int D_v = 48;
  int B = 64;
  int r = 4;
  int latent_dim = 8;
  double noise = 0.05;
  double ar_coeff = 0.95;       // real-trajectory smoothness
  double ar_coeff_fake = 0.80;  // manipulated-trajectory smoothness
  std::uint64_t map_seed = 7777;
  std::vector<std::string> categories = {"RVRA",    "RVFA",    "FVRA",   "FVFA",
                                         "PARTIAL", "INTRA_V", "INTRA_A"};

  void validate() const;

  std::string to_json() const;
  static GeneratorConfig from_json(const std::string& text);
  static GeneratorConfig load(const std::string& path);
  void save(const std::string& path) const;
};

}  // namespace mpdf
