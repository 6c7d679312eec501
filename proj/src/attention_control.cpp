#include "dic/attention_control.hpp"

#include <algorithm>
#include <cmath>

#include "dic/error.hpp"
#include "dic/latent.hpp"

namespace dic {

namespace {

std::vector<std::size_t> resolve_words(const std::vector<std::string>& words, const PromptEmbedding& prompt,
                                       const char* side) {
  std::vector<std::size_t> out;
  for (const auto& word : words) {
    const auto idx = token_indices(prompt, word);
    if (idx.empty()) {
      throw ConfigError(std::string(side) + " blend word '" + word + "' not found in prompt '" + prompt.text + "'");
    }
    for (auto i : idx) {
      if (std::find(out.begin(), out.end(), i) == out.end()) out.push_back(i);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void check_threshold(double k, const char* name) {
  if (!(k > 0.0 && k < 1.0)) throw ConfigError(std::string(name) + " must lie in (0, 1)");
}

}  // namespace

ResolvedBlend resolve_blend(const BlendWords& words, const PromptEmbedding& src, const PromptEmbedding& tgt) {
  check_threshold(words.k_src, "k_src");
  check_threshold(words.k_tgt, "k_tgt");
  if (words.source_words.empty() || words.target_words.empty()) {
    throw ConfigError("local blend needs at least one source and one target word");
  }
  return {resolve_words(words.source_words, src, "source"), resolve_words(words.target_words, tgt, "target"),
          words.k_src, words.k_tgt};
}

// ---------------------------------------------------------------------------

ControlSchedule ControlSchedule::defaults(int steps, std::size_t layers) {
  ControlSchedule s;
  s.tau_c = static_cast<int>(std::lround(0.6 * steps));
  s.self_start = static_cast<int>(std::lround(0.2 * steps));
  s.self_layer = layers / 2;
  return s;
}

ControlSchedule ControlSchedule::disabled(int steps) {
  ControlSchedule s;
  s.tau_c = steps + 1;
  s.self_start = steps + 1;
  s.cross_enabled = false;
  s.self_enabled = false;
  return s;
}

void ControlSchedule::validate(int steps, std::size_t layers) const {
  if (tau_c < 0 || tau_c > steps + 1) {
    throw ConfigError("tau_c must lie in 0.." + std::to_string(steps + 1));
  }
  if (self_start < 0 || self_start > steps + 1) {
    throw ConfigError("self-control start must lie in 0.." + std::to_string(steps + 1));
  }
  if (self_layer > layers) throw ConfigError("self-control layer must lie in 0.." + std::to_string(layers));
}

bool ControlSchedule::cross_active(int t) const noexcept { return cross_enabled && t >= tau_c; }

bool ControlSchedule::self_active(int t, int steps, std::size_t layer) const noexcept {
  return self_enabled && (steps - t) >= self_start && layer >= self_layer;
}

bool ControlSchedule::any_active(int t, int steps, std::size_t layers) const noexcept {
  if (cross_active(t)) return true;
  for (std::size_t l = 0; l < layers; ++l)
    if (self_active(t, steps, l)) return true;
  return false;
}

// ---------------------------------------------------------------------------

Tensor refine(const Tensor& map_src, const Tensor& map_tgt, const Alignment& alignment) {
  if (map_src.rank() != 2 || map_tgt.rank() != 2 || map_src.rows() != map_tgt.rows()) {
    throw DimensionError("refine: maps " + shape_string(map_src.shape()) + " and " +
                         shape_string(map_tgt.shape()) + " do not share latent positions");
  }
  if (alignment.size() != map_tgt.cols()) {
    throw AlignmentError("alignment covers " + std::to_string(alignment.size()) + " tokens, target map has " +
                         std::to_string(map_tgt.cols()));
  }
  for (const auto& a : alignment.map) {
    if (a && *a >= map_src.cols()) {
      throw AlignmentError("alignment index " + std::to_string(*a) + " outside source prompt of " +
                           std::to_string(map_src.cols()) + " tokens");
    }
  }
  Tensor out(map_tgt.shape());
  for (std::size_t i = 0; i < out.rows(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < out.cols(); ++j) {
      const auto& a = alignment.map[j];
      const double v = a ? map_src.at(i, *a) : map_tgt.at(i, j);
      out.at(i, j) = v;
      sum += v;
    }
    if (sum > 0.0)
      for (std::size_t j = 0; j < out.cols(); ++j) out.at(i, j) /= sum;
  }
  return out;
}

std::vector<double> threshold_mask(const Tensor& map, std::span<const std::size_t> columns, double k) {
  if (columns.empty()) throw ConfigError("threshold_mask needs at least one token column");
  if (map.rank() != 2) throw DimensionError("threshold_mask expects a 2-D map");
  for (auto c : columns) {
    if (c >= map.cols()) {
      throw DimensionError("column " + std::to_string(c) + " outside map " + shape_string(map.shape()));
    }
  }
  std::vector<double> mask(map.rows());
  for (std::size_t i = 0; i < map.rows(); ++i) {
    double avg = 0.0;
    for (auto c : columns) avg += map.at(i, c);
    avg /= static_cast<double>(columns.size());
    mask[i] = avg >= k ? 1.0 : 0.0;
  }
  return mask;
}

Tensor local_edit(const Tensor& z_src, const Tensor& z_tgt, std::span<const double> mask_src,
                  std::span<const double> mask_tgt) {
  require_same_shape(z_src, z_tgt, "local_edit");
  const std::size_t frames = z_src.shape().back();
  if (mask_src.size() != frames || mask_tgt.size() != frames) {
    throw DimensionError("local_edit: masks must have one entry per frame (" + std::to_string(frames) + ")");
  }
  Tensor out(z_src.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t f = i % frames;
    const double keep = 1.0 - mask_tgt[f] + mask_src[f];
    const double take = mask_tgt[f] - mask_src[f];
    out[i] = keep * z_src[i] + take * z_tgt[i];
  }
  return out;
}

Tensor local_edit(const Tensor& z_src, const Tensor& z_tgt, const Tensor& map_src, const Tensor& map_tgt,
                  const ResolvedBlend& blend) {
  const auto m_tgt = threshold_mask(map_tgt, blend.target_indices, blend.k_tgt);
  const auto m_src = threshold_mask(map_src, blend.source_indices, blend.k_src);
  return local_edit(z_src, z_tgt, m_src, m_tgt);
}

Tensor cross_edit(const Tensor& map_har, const Tensor& map_tgt, int t, const Alignment& alignment,
                  const ControlSchedule& sched) {
  if (t < 1) throw StepError("cross_edit needs t >= 1");
  return sched.cross_active(t) ? refine(map_har, map_tgt, alignment) : map_tgt;
}

TripleSelection self_edit(const QkvTriple& src, const QkvTriple& tgt, int t, int steps, std::size_t layer,
                          const ControlSchedule& sched) {
  if (src.q.shape() != tgt.q.shape() || src.k.shape() != tgt.k.shape() || src.v.shape() != tgt.v.shape()) {
    throw InjectionError("self_edit: layer " + std::to_string(layer) + " source triple " +
                         shape_string(src.q.shape()) + " vs target " + shape_string(tgt.q.shape()));
  }
  const bool active = sched.self_active(t, steps, layer);
  if (sched.literal_self_edit && sched.self_enabled) {
    // Case table exactly as written: full source triple when active,
    // target query over source keys/values otherwise.
    if (active) return {&src.q, &src.k, &src.v};
    return {&tgt.q, &src.k, &src.v};
  }
  if (active) return {&tgt.q, &src.k, &src.v};
  return {&tgt.q, &tgt.k, &tgt.v};
}

// ---------------------------------------------------------------------------

HacResult hac_step(const Denoiser& model, const Tensor& z_src, const Tensor& z_tgt, const Tensor& z_har, int t,
                   int steps, const PromptEmbedding& c_src, const PromptEmbedding& c_tgt,
                   const Alignment& alignment, const ControlSchedule& sched) {
  const TinyAttentionModel* am = model.attention_model();
  if (!am) throw CapabilityError("attention control requires an attention model");
  require_same_shape(z_src, z_tgt, "hac_step");
  require_same_shape(z_src, z_har, "hac_step");
  const std::size_t n_layers = am->layers();

  AttentionPrediction src = am->predict_attention(z_src, t, c_src, {});
  AttentionPrediction tgt = am->predict_attention(z_tgt, t, c_tgt, {});

  HacResult out;
  InjectionPlan tgt_plan = InjectionPlan::none(n_layers);
  bool inject_tgt = sched.cross_active(t);

  const bool literal = sched.literal_self_edit && sched.self_enabled;
  if (sched.harmonic) {
    // Layers without active self control keep the harmonic branch's own
    // products, so an all-off schedule leaves three independent predictions.
    InjectionPlan har_plan = InjectionPlan::none(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
      if (sched.self_active(t, steps, l) || literal) {
        har_plan.self_triples[l] =
            self_edit(src.record.layers[l].self, tgt.record.layers[l].self, t, steps, l, sched).materialize();
      }
    }
    AttentionPrediction har = am->predict_attention(z_har, t, c_src, har_plan);
    for (std::size_t l = 0; l < n_layers; ++l) {
      tgt_plan.cross_maps[l] =
          cross_edit(har.record.layers[l].cross_map, tgt.record.layers[l].cross_map, t, alignment, sched);
    }
    out.eps_har = std::move(har.eps);
    out.record_har = std::move(har.record);
  } else {
    // Dual-branch control: only layers with an active control are overridden.
    for (std::size_t l = 0; l < n_layers; ++l) {
      if (sched.self_active(t, steps, l) || literal) {
        tgt_plan.self_triples[l] =
            self_edit(src.record.layers[l].self, tgt.record.layers[l].self, t, steps, l, sched).materialize();
      }
      if (sched.cross_active(t)) {
        tgt_plan.cross_maps[l] =
            cross_edit(src.record.layers[l].cross_map, tgt.record.layers[l].cross_map, t, alignment, sched);
      }
    }
    inject_tgt = sched.any_active(t, steps, n_layers) || literal;
  }

  // An inactive plan would only re-inject the target's own products, which
  // reproduces the plain pass bit for bit; reuse it instead.
  AttentionPrediction tgt_hat = inject_tgt ? am->predict_attention(z_tgt, t, c_tgt, tgt_plan) : tgt;

  out.map_src = src.record.mean_cross_map();
  out.map_tgt = tgt.record.mean_cross_map();
  out.map_tgt_hat = tgt_hat.record.mean_cross_map();
  out.eps_src = std::move(src.eps);
  out.eps_tgt = std::move(tgt_hat.eps);
  out.record_src = std::move(src.record);
  out.record_tgt = std::move(tgt.record);
  out.record_tgt_hat = std::move(tgt_hat.record);
  return out;
}

}  // namespace dic
