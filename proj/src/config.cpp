#include "mpdf/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mpdf {

using nlohmann::json;

void ModelConfig::validate() const {
  if (f < 1 || T_v < 1 || D_v < 1 || B < 1) throw std::invalid_argument("config: dimensions must be positive");
  if (w < 1 || w % 2 == 0) throw std::invalid_argument("config: kernel size w must be odd");
  if (N < 1) throw std::invalid_argument("config: N must be >= 1");
  if (L < 1) throw std::invalid_argument("config: L must be >= 1");
  if (r < 1) throw std::invalid_argument("config: r must be >= 1");
  if (groupnorm_groups < 1 || f % groupnorm_groups != 0)
    throw std::invalid_argument("config: groupnorm groups must divide f");
  if (f % heads != 0 || (2 * f) % heads != 0)
    throw std::invalid_argument("config: heads must divide f");
  if (feature_set.empty()) throw std::invalid_argument("config: feature_set must be non-empty");
  for (char c : feature_set)
    if (c != 'C' && c != 'V' && c != 'A')
      throw std::invalid_argument("config: feature_set may only contain C, V, A");
  if (attention_kind != "convolutional" && attention_kind != "transformer-1" &&
      attention_kind != "transformer-3")
    throw std::invalid_argument("config: unknown attention_kind '" + attention_kind + "'");
  if (margin <= 0) throw std::invalid_argument("config: margin must be positive");
  if (batch_size < 1 || epochs < 0) throw std::invalid_argument("config: bad training schedule");
}

namespace {

json model_to_json(const ModelConfig& c) {
  return json{{"f", c.f},
              {"w", c.w},
              {"N", c.N},
              {"L", c.L},
              {"r", c.r},
              {"T_v", c.T_v},
              {"D_v", c.D_v},
              {"B", c.B},
              {"groupnorm_groups", c.groupnorm_groups},
              {"heads", c.heads},
              {"enc_layers", c.enc_layers},
              {"dec_layers", c.dec_layers},
              {"encoder_hidden", c.encoder_hidden},
              {"margin", c.margin},
              {"lambda_reg", c.lambda_reg},
              {"lambda_rec", c.lambda_rec},
              {"lambda_scls", c.lambda_scls},
              {"focal_alpha", c.focal_alpha},
              {"focal_gamma", c.focal_gamma},
              {"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"seed", c.seed},
              {"feature_set", c.feature_set},
              {"contrastive_enabled", c.contrastive_enabled},
              {"attention_kind", c.attention_kind},
              {"pooled_classifier", c.pooled_classifier},
              {"pooled_length", c.pooled_length},
              {"score_threshold", c.score_threshold},
              {"pre_nms_topk", c.pre_nms_topk},
              {"nms_iou", c.nms_iou},
              {"enforce_min_length", c.enforce_min_length}};
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

ModelConfig model_from_json(const json& j) {
  ModelConfig c;
  maybe(j, "f", c.f);
  maybe(j, "w", c.w);
  maybe(j, "N", c.N);
  maybe(j, "L", c.L);
  maybe(j, "r", c.r);
  maybe(j, "T_v", c.T_v);
  maybe(j, "D_v", c.D_v);
  maybe(j, "B", c.B);
  maybe(j, "groupnorm_groups", c.groupnorm_groups);
  maybe(j, "heads", c.heads);
  maybe(j, "enc_layers", c.enc_layers);
  maybe(j, "dec_layers", c.dec_layers);
  maybe(j, "encoder_hidden", c.encoder_hidden);
  maybe(j, "margin", c.margin);
  maybe(j, "lambda_reg", c.lambda_reg);
  maybe(j, "lambda_rec", c.lambda_rec);
  maybe(j, "lambda_scls", c.lambda_scls);
  maybe(j, "focal_alpha", c.focal_alpha);
  maybe(j, "focal_gamma", c.focal_gamma);
  maybe(j, "learning_rate", c.learning_rate);
  maybe(j, "batch_size", c.batch_size);
  maybe(j, "epochs", c.epochs);
  maybe(j, "seed", c.seed);
  maybe(j, "feature_set", c.feature_set);
  maybe(j, "contrastive_enabled", c.contrastive_enabled);
  maybe(j, "attention_kind", c.attention_kind);
  maybe(j, "pooled_classifier", c.pooled_classifier);
  maybe(j, "pooled_length", c.pooled_length);
  maybe(j, "score_threshold", c.score_threshold);
  maybe(j, "pre_nms_topk", c.pre_nms_topk);
  maybe(j, "nms_iou", c.nms_iou);
  maybe(j, "enforce_min_length", c.enforce_min_length);
  return c;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

}  // namespace

std::string ModelConfig::to_json() const { return model_to_json(*this).dump(2); }

ModelConfig ModelConfig::from_json(const std::string& text) {
  return model_from_json(json::parse(text));
}

ModelConfig ModelConfig::load(const std::string& path) { return from_json(read_file(path)); }

void ModelConfig::save(const std::string& path) const { write_file(path, to_json() + "\n"); }

void GeneratorConfig::validate() const {
  if (T_v < 1 || D_v < 1 || B < 1 || r < 1 || latent_dim < 1)
    throw std::invalid_argument("generator config: dimensions must be positive");
  if (noise < 0) throw std::invalid_argument("generator config: noise must be >= 0");
  if (ar_coeff <= -1 || ar_coeff >= 1 || ar_coeff_fake <= -1 || ar_coeff_fake >= 1)
    throw std::invalid_argument("generator config: AR coefficients must lie in (-1, 1)");
  if (categories.empty()) throw std::invalid_argument("generator config: no categories");
}

std::string GeneratorConfig::to_json() const {
  json j{{"T_v", T_v},
         {"D_v", D_v},
         {"B", B},
         {"r", r},
         {"latent_dim", latent_dim},
         {"noise", noise},
         {"ar_coeff", ar_coeff},
         {"ar_coeff_fake", ar_coeff_fake},
         {"map_seed", map_seed},
         {"categories", categories}};
  return j.dump(2);
}

GeneratorConfig GeneratorConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  GeneratorConfig c;
  maybe(j, "T_v", c.T_v);
  maybe(j, "D_v", c.D_v);
  maybe(j, "B", c.B);
  maybe(j, "r", c.r);
  maybe(j, "latent_dim", c.latent_dim);
  maybe(j, "noise", c.noise);
  maybe(j, "ar_coeff", c.ar_coeff);
  maybe(j, "ar_coeff_fake", c.ar_coeff_fake);
  maybe(j, "map_seed", c.map_seed);
  maybe(j, "categories", c.categories);
  return c;
}

GeneratorConfig GeneratorConfig::load(const std::string& path) {
  return from_json(read_file(path));
}

void GeneratorConfig::save(const std::string& path) const { write_file(path, to_json() + "\n"); }

}  // namespace mpdf
