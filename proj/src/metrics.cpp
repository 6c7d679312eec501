#include "dic/metrics.hpp"

#include <cmath>

#include "dic/latent.hpp"

namespace dic {

Tensor self_similarity(const Tensor& latent) {
  const Tensor f = to_frames(latent);
  const std::size_t n = f.rows();
  std::vector<double> norms(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < f.cols(); ++j) s += f.at(i, j) * f.at(i, j);
    norms[i] = std::sqrt(s);
  }
  Tensor g({n, n});
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a; b < n; ++b) {
      double c = 0.0;
      if (norms[a] > 0.0 && norms[b] > 0.0) {
        for (std::size_t j = 0; j < f.cols(); ++j) c += f.at(a, j) * f.at(b, j);
        c /= norms[a] * norms[b];
      }
      g.at(a, b) = c;
      g.at(b, a) = c;
    }
  }
  return g;
}

double structure_distance(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "structure_distance");
  return mse(self_similarity(a), self_similarity(b)) * 1e3;
}

double mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double edit_fidelity_proxy(const Tensor& z, const PromptEmbedding& prompt, const AnalyticGaussianModel& model) {
  const Tensor mu = model.mean_for(prompt);
  require_same_shape(z, mu, "edit_fidelity_proxy");
  return -l2_norm(sub(z, mu)) / std::sqrt(static_cast<double>(z.size()));
}

}  // namespace dic
