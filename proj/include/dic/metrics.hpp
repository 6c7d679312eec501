#pragma once

#include <string>

#include "dic/denoiser.hpp"
#include "dic/tensor.hpp"
#include "dic/text.hpp"

namespace dic {

// Cosine self-similarity of the latent's frame sequence (frames on the last
// axis). Frames with zero norm have cosine 0 against everything, themselves
// included.
Tensor self_similarity(const Tensor& latent);

// Mean squared difference of the two self-similarity matrices, times 1e3.
double structure_distance(const Tensor& a, const Tensor& b);

double mse(const Tensor& a, const Tensor& b);

// -||z - mu_prompt|| / sqrt(dim). Zero at the prompt mean, negative elsewhere.
double edit_fidelity_proxy(const Tensor& z, const PromptEmbedding& prompt, const AnalyticGaussianModel& model);

struct MetricReport {
  std::string entry_id;
  int editing_type_id = 0;
  std::string method;
  double structure_distance_e3 = 0.0;
  double mse = 0.0;
  double edit_fidelity_proxy = 0.0;
};

}  // namespace dic
