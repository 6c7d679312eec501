#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "dic/latent.hpp"
#include "dic/schedule.hpp"
#include "dic/tensor.hpp"
#include "dic/text.hpp"

namespace dic {

class TinyAttentionModel;

// Noise predictor eps_theta(z_t, t, c).
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual Tensor predict(const Tensor& z_t, int t, const PromptEmbedding& c) const = 0;
  virtual std::string_view name() const noexcept = 0;

  // Non-null when the model exposes attention introspection and injection.
  virtual const TinyAttentionModel* attention_model() const noexcept { return nullptr; }
};

// Classifier-free guided estimate. omega == 1 skips the unconditional pass;
// the result is bitwise identical to cfg_combine with any finite uncond term.
Tensor guided_eps(const Denoiser& model, const Tensor& z_t, int t, const PromptEmbedding& cond,
                  const PromptEmbedding& uncond, double omega);

// ---------------------------------------------------------------------------
// Analytic Gaussian model
// ---------------------------------------------------------------------------

// Optimal noise predictor for data z_0 ~ N(mean, std^2) (elementwise):
//   E[z_0 | z_t] = mean + (sqrt(ab) std^2 / (ab std^2 + 1 - ab)) (z_t - sqrt(ab) mean)
//   eps*         = (z_t - sqrt(ab) E[z_0 | z_t]) / sqrt(1 - ab)
Tensor gaussian_optimal_eps(const Tensor& z_t, double alpha_bar, const Tensor& mean, double std);

struct AnalyticModelConfig {
  LatentGeometry geometry;
  double prior_std = 1.0;       // sigma_0 of every prompt-conditional prior
  double null_std = 10.0;       // prior spread of the unconditional (null-prompt) model
  double mean_amplitude = 1.0;  // per-element std of the prompt mean patterns
  std::uint64_t seed = 0;

  void validate() const;
};

// Each prompt c owns a Gaussian prior N(mu_c, sigma_0^2). mu_c sums one seeded
// pattern per token, scaled by amplitude / sqrt(n_tokens). The null prompt is
// centred at zero with the wider null_std, so guidance sharpens toward mu_c
// instead of extrapolating past it.
class AnalyticGaussianModel final : public Denoiser {
 public:
  AnalyticGaussianModel(NoiseSchedule schedule, AnalyticModelConfig config);

  Tensor mean_for(const PromptEmbedding& c) const;
  double std_for(const PromptEmbedding& c) const noexcept;

  Tensor predict(const Tensor& z_t, int t, const PromptEmbedding& c) const override;
  std::string_view name() const noexcept override { return "analytic"; }

  const NoiseSchedule& schedule() const noexcept { return schedule_; }
  const AnalyticModelConfig& config() const noexcept { return config_; }

 private:
  NoiseSchedule schedule_;
  AnalyticModelConfig config_;
};

// ---------------------------------------------------------------------------
// Tiny attention model
// ---------------------------------------------------------------------------

struct QkvTriple {
  Tensor q, k, v;
  bool operator==(const QkvTriple&) const = default;
};

struct LayerRecord {
  QkvTriple self;
  Tensor self_map;  // [frames x frames]
  QkvTriple cross;
  Tensor cross_map;  // [frames x prompt tokens]
};

// What one forward pass actually used, layer by layer.
struct AttentionRecord {
  std::vector<LayerRecord> layers;

  // Cross-attention map averaged over layers.
  Tensor mean_cross_map() const;
};

// Per-layer overrides. Empty optionals leave the layer's own values in place.
struct InjectionPlan {
  std::vector<std::optional<Tensor>> cross_maps;
  std::vector<std::optional<QkvTriple>> self_triples;

  static InjectionPlan none(std::size_t layers);
};

struct AttentionPrediction {
  Tensor eps;
  AttentionRecord record;
};

struct TinyModelConfig {
  LatentGeometry geometry;
  std::size_t layers = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

// Stack of blocks over the latent's frame sequence:
//   h = frames(z) + timestep embedding
//   per block: residual MLP, self-attention (Q,K,V from h), cross-attention
//   (Q from h; K,V from prompt vectors), each added back residually
//   eps = tanh(h W_out), folded back to the latent shape.
// Weights are seeded normals; nothing is trained.
class TinyAttentionModel final : public Denoiser {
 public:
  explicit TinyAttentionModel(TinyModelConfig config);

  AttentionPrediction predict_attention(const Tensor& z_t, int t, const PromptEmbedding& c,
                                        const InjectionPlan& plan) const;

  Tensor predict(const Tensor& z_t, int t, const PromptEmbedding& c) const override;
  std::string_view name() const noexcept override { return "tiny-unet"; }
  const TinyAttentionModel* attention_model() const noexcept override { return this; }

  std::size_t layers() const noexcept { return config_.layers; }
  const TinyModelConfig& config() const noexcept { return config_; }

 private:
  struct Block {
    Tensor mlp_in, mlp_out;
    Tensor self_q, self_k, self_v, self_o;
    Tensor cross_q, cross_k, cross_v, cross_o;
  };

  TinyModelConfig config_;
  std::vector<Block> blocks_;
  Tensor out_proj_;
};

// Sinusoidal embedding of timestep t with `dim` entries: [sin(t w_i), cos(t w_i)],
// w_i = 10000^(-i / (dim/2)).
std::vector<double> timestep_embedding(int t, std::size_t dim);

}  // namespace dic
