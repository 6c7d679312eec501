#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dic/denoiser.hpp"
#include "dic/tensor.hpp"
#include "dic/text.hpp"

namespace dic {

// Words whose cross-attention columns gate the local blend.
struct BlendWords {
  std::vector<std::string> source_words;
  std::vector<std::string> target_words;
  double k_src = 0.3;
  double k_tgt = 0.3;
};

// BlendWords resolved against a concrete prompt pair.
struct ResolvedBlend {
  std::vector<std::size_t> source_indices;
  std::vector<std::size_t> target_indices;
  double k_src = 0.3;
  double k_tgt = 0.3;
};

// Throws ConfigError naming the first word that matches no token, or when a
// threshold lies outside (0, 1).
ResolvedBlend resolve_blend(const BlendWords& words, const PromptEmbedding& src, const PromptEmbedding& tgt);

// When cross and self control fire during denoising.
//
// Cross control is active while t >= tau_c (t counts down from T).
// Self control is active once (T - t) >= self_start steps have elapsed and
// the layer index l >= self_layer. A value of T + 1 for tau_c or self_start
// switches the respective control off.
struct ControlSchedule {
  int tau_c = 0;
  int self_start = 0;
  std::size_t self_layer = 0;
  bool cross_enabled = true;
  bool self_enabled = true;
  bool harmonic = true;
  bool literal_self_edit = false;

  // tau_c = 0.6 T, self_start = 0.2 T, self_layer = layers / 2.
  static ControlSchedule defaults(int steps, std::size_t layers);
  static ControlSchedule disabled(int steps);

  void validate(int steps, std::size_t layers) const;
  bool cross_active(int t) const noexcept;
  bool self_active(int t, int steps, std::size_t layer) const noexcept;
  bool any_active(int t, int steps, std::size_t layers) const noexcept;
};

// Replaces target columns with aligned source columns, then renormalizes rows.
Tensor refine(const Tensor& map_src, const Tensor& map_tgt, const Alignment& alignment);

// Averages the selected columns per row and returns 1 where the average >= k.
std::vector<double> threshold_mask(const Tensor& map, std::span<const std::size_t> columns, double k);

// (1 - m_tgt + m_src) * z_src + (m_tgt - m_src) * z_tgt, masks broadcast per frame.
Tensor local_edit(const Tensor& z_src, const Tensor& z_tgt, std::span<const double> mask_src,
                  std::span<const double> mask_tgt);
Tensor local_edit(const Tensor& z_src, const Tensor& z_tgt, const Tensor& map_src, const Tensor& map_tgt,
                  const ResolvedBlend& blend);

Tensor cross_edit(const Tensor& map_har, const Tensor& map_tgt, int t, const Alignment& alignment,
                  const ControlSchedule& sched);

// Which tensors the harmonic pass should use. Pointers alias the inputs.
struct TripleSelection {
  const Tensor* q;
  const Tensor* k;
  const Tensor* v;

  QkvTriple materialize() const { return {*q, *k, *v}; }
};

TripleSelection self_edit(const QkvTriple& src, const QkvTriple& tgt, int t, int steps, std::size_t layer,
                          const ControlSchedule& sched);

// Conditional outputs of one harmonized attention control step.
struct HacResult {
  Tensor eps_src;
  Tensor eps_tgt;  // after cross control (eps-hat of the target)
  std::optional<Tensor> eps_har;
  Tensor map_src;      // layer-averaged cross map of the source pass
  Tensor map_tgt;      // layer-averaged cross map of the plain target pass
  Tensor map_tgt_hat;  // layer-averaged map actually injected into the target
  AttentionRecord record_src;
  AttentionRecord record_tgt;
  std::optional<AttentionRecord> record_har;
  AttentionRecord record_tgt_hat;
};

// One step of harmonized attention control (conditional predictions only):
//   1. plain passes on z_src (c_src) and z_tgt (c_tgt)
//   2. self_edit builds the harmonic Q,K,V for layers under self control
//   3. pass on z_har (c_src) under that injection, capturing M_har
//   4. cross_edit(M_har, M_tgt) per layer gives M-hat
//   5. pass on z_tgt (c_tgt) under M-hat
// With sched.harmonic off the harmonic pass is skipped and the target pass
// takes both the self_edit triple and cross_edit(M_src, M_tgt) directly.
HacResult hac_step(const Denoiser& model, const Tensor& z_src, const Tensor& z_tgt, const Tensor& z_har, int t,
                   int steps, const PromptEmbedding& c_src, const PromptEmbedding& c_tgt,
                   const Alignment& alignment, const ControlSchedule& sched);

}  // namespace dic
