#include "dic/denoiser.hpp"

#include <cmath>
#include <string>

#include "dic/error.hpp"
#include "dic/rng.hpp"

namespace dic {

Tensor guided_eps(const Denoiser& model, const Tensor& z_t, int t, const PromptEmbedding& cond,
                  const PromptEmbedding& uncond, double omega) {
  Tensor eps_cond = model.predict(z_t, t, cond);
  if (omega == 1.0) return eps_cond;
  return cfg_combine(eps_cond, model.predict(z_t, t, uncond), omega);
}

// ---------------------------------------------------------------------------

Tensor gaussian_optimal_eps(const Tensor& z_t, double alpha_bar, const Tensor& mean, double std) {
  require_same_shape(z_t, mean, "gaussian_optimal_eps");
  if (!(alpha_bar < 1.0)) throw StepError("optimal eps undefined at alpha_bar = 1 (t = 0)");
  const double sa = std::sqrt(alpha_bar);
  const double var = std * std;
  const double gain = sa * var / (alpha_bar * var + 1.0 - alpha_bar);
  const double denom = std::sqrt(1.0 - alpha_bar);
  Tensor out(z_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double posterior_mean = mean[i] + gain * (z_t[i] - sa * mean[i]);
    out[i] = (z_t[i] - sa * posterior_mean) / denom;
  }
  return out;
}

void AnalyticModelConfig::validate() const {
  if (!(prior_std > 0.0)) throw ConfigError("analytic model prior std must be > 0");
  if (!(null_std > 0.0)) throw ConfigError("analytic model null std must be > 0");
  if (!(mean_amplitude >= 0.0)) throw ConfigError("analytic model mean amplitude must be >= 0");
}

AnalyticGaussianModel::AnalyticGaussianModel(NoiseSchedule schedule, AnalyticModelConfig config)
    : schedule_(std::move(schedule)), config_(config) {
  config_.validate();
}

Tensor AnalyticGaussianModel::mean_for(const PromptEmbedding& c) const {
  const Shape shape = config_.geometry.shape();
  Tensor mean(shape, 0.0);
  if (c.is_null) return mean;
  const double weight = config_.mean_amplitude / std::sqrt(static_cast<double>(c.size()));
  for (const auto& token : c.tokens) {
    SeededRng rng(hash_string(token, mix_seed(config_.seed, 0x6D65616E)));
    for (auto& v : mean.data()) v += weight * rng.normal();
  }
  return mean;
}

double AnalyticGaussianModel::std_for(const PromptEmbedding& c) const noexcept {
  return c.is_null ? config_.null_std : config_.prior_std;
}

Tensor AnalyticGaussianModel::predict(const Tensor& z_t, int t, const PromptEmbedding& c) const {
  if (t < 1 || t > schedule_.steps()) {
    throw StepError("analytic model needs 1 <= t <= " + std::to_string(schedule_.steps()) + ", got " +
                    std::to_string(t));
  }
  return gaussian_optimal_eps(z_t, schedule_.alpha_bar(t), mean_for(c), std_for(c));
}

// ---------------------------------------------------------------------------

std::vector<double> timestep_embedding(int t, std::size_t dim) {
  std::vector<double> out(dim, 0.0);
  const std::size_t half = dim / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
    out[i] = std::sin(t * freq);
    out[i + half] = std::cos(t * freq);
  }
  return out;
}

Tensor AttentionRecord::mean_cross_map() const {
  if (layers.empty()) throw DimensionError("attention record has no layers");
  Tensor acc = layers.front().cross_map;
  for (std::size_t l = 1; l < layers.size(); ++l) acc = add(acc, layers[l].cross_map);
  return scale(acc, 1.0 / static_cast<double>(layers.size()));
}

InjectionPlan InjectionPlan::none(std::size_t layers) {
  InjectionPlan plan;
  plan.cross_maps.resize(layers);
  plan.self_triples.resize(layers);
  return plan;
}

void TinyModelConfig::validate() const {
  if (layers == 0) throw ConfigError("tiny model needs at least one layer");
  if (geometry.frame_width() == 0 || geometry.frames == 0) throw ConfigError("empty latent geometry");
}

namespace {

Tensor seeded_weights(SeededRng& rng, std::size_t rows, std::size_t cols, double gain) {
  Tensor w = normal(rng, {rows, cols});
  return scale(w, gain / std::sqrt(static_cast<double>(rows)));
}

Tensor tanh_all(Tensor a) {
  for (auto& v : a.data()) v = std::tanh(v);
  return a;
}

Tensor attention_map(const Tensor& q, const Tensor& k) {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  return softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_d));
}

void check_override(const Tensor& given, const Tensor& native, std::size_t layer, const char* what) {
  if (given.shape() != native.shape()) {
    throw InjectionError("layer " + std::to_string(layer) + " " + what + " override has shape " +
                         shape_string(given.shape()) + ", model expects " + shape_string(native.shape()));
  }
}

}  // namespace

TinyAttentionModel::TinyAttentionModel(TinyModelConfig config) : config_(config) {
  config_.validate();
  const std::size_t d = config_.geometry.frame_width();
  SeededRng rng(mix_seed(config_.seed, 0x74696E79));
  blocks_.reserve(config_.layers);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    Block b;
    b.mlp_in = seeded_weights(rng, d, d, 1.0);
    b.mlp_out = seeded_weights(rng, d, d, 0.5);
    b.self_q = seeded_weights(rng, d, d, 1.5);
    b.self_k = seeded_weights(rng, d, d, 1.5);
    b.self_v = seeded_weights(rng, d, d, 1.0);
    b.self_o = seeded_weights(rng, d, d, 0.5);
    b.cross_q = seeded_weights(rng, d, d, 2.0);
    b.cross_k = seeded_weights(rng, kTextDim, d, 2.0);
    b.cross_v = seeded_weights(rng, kTextDim, d, 1.0);
    b.cross_o = seeded_weights(rng, d, d, 0.5);
    blocks_.push_back(std::move(b));
  }
  out_proj_ = seeded_weights(rng, d, d, 1.0);
}

AttentionPrediction TinyAttentionModel::predict_attention(const Tensor& z_t, int t, const PromptEmbedding& c,
                                                          const InjectionPlan& plan) const {
  const std::size_t n_layers = config_.layers;
  const bool has_cross = !plan.cross_maps.empty();
  const bool has_self = !plan.self_triples.empty();
  if ((has_cross && plan.cross_maps.size() != n_layers) || (has_self && plan.self_triples.size() != n_layers)) {
    throw InjectionError("injection plan must cover all " + std::to_string(n_layers) + " layers");
  }
  if (z_t.shape() != config_.geometry.shape()) {
    throw DimensionError("tiny model expects latent " + shape_string(config_.geometry.shape()) + ", got " +
                         shape_string(z_t.shape()));
  }

  Tensor h = to_frames(z_t);
  const auto temb = timestep_embedding(t, h.cols());
  for (std::size_t f = 0; f < h.rows(); ++f)
    for (std::size_t j = 0; j < h.cols(); ++j) h.at(f, j) += temb[j];

  AttentionPrediction out;
  out.record.layers.reserve(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Block& b = blocks_[l];
    LayerRecord rec;

    h = add(h, matmul(tanh_all(matmul(h, b.mlp_in)), b.mlp_out));

    rec.self = {matmul(h, b.self_q), matmul(h, b.self_k), matmul(h, b.self_v)};
    if (has_self && plan.self_triples[l]) {
      const QkvTriple& given = *plan.self_triples[l];
      check_override(given.q, rec.self.q, l, "self-attention Q");
      check_override(given.k, rec.self.k, l, "self-attention K");
      check_override(given.v, rec.self.v, l, "self-attention V");
      rec.self = given;
    }
    rec.self_map = attention_map(rec.self.q, rec.self.k);
    h = add(h, matmul(matmul(rec.self_map, rec.self.v), b.self_o));

    rec.cross = {matmul(h, b.cross_q), matmul(c.vectors, b.cross_k), matmul(c.vectors, b.cross_v)};
    rec.cross_map = attention_map(rec.cross.q, rec.cross.k);
    if (has_cross && plan.cross_maps[l]) {
      check_override(*plan.cross_maps[l], rec.cross_map, l, "cross-attention map");
      rec.cross_map = *plan.cross_maps[l];
    }
    h = add(h, matmul(matmul(rec.cross_map, rec.cross.v), b.cross_o));

    out.record.layers.push_back(std::move(rec));
  }
  out.eps = from_frames(tanh_all(matmul(h, out_proj_)), z_t.shape());
  return out;
}

Tensor TinyAttentionModel::predict(const Tensor& z_t, int t, const PromptEmbedding& c) const {
  return predict_attention(z_t, t, c, {}).eps;
}

}  // namespace dic
