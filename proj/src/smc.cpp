#include "gpssm/smc.hpp"

#include <iostream>
#include <limits>
#include <stdexcept>

namespace gpssm {

Vec normalized_weights_from_log(const Eigen::Ref<const Vec>& logw,
                                const std::string& where) {
  Vec w = Vec::Zero(logw.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < logw.size(); ++i)
    if (std::isfinite(logw[i])) mx = std::max(mx, logw[i]);
  if (!std::isfinite(mx))
    throw std::runtime_error("particle weights degenerate (" + where + ")");
  for (Index i = 0; i < logw.size(); ++i)
    w[i] = std::isfinite(logw[i]) ? std::exp(logw[i] - mx) : 0.0;
  const double s = w.sum();
  if (!(s > 0.0))
    throw std::runtime_error("particle weights degenerate (" + where + ")");
  return w / s;
}

VecI resample_ancestors(const Eigen::Ref<const Vec>& weights, Index n_draws, Rng& rng) {
  VecI anc(n_draws);
  for (Index i = 0; i < n_draws; ++i)
    anc[i] = static_cast<int>(rng.categorical(weights));
  return anc;
}

Vec ancestor_weights(const Eigen::Ref<const Vec>& log_weights_prev,
                     const Eigen::Ref<const Vec>& suffix_logdens) {
  Vec lw(log_weights_prev.size());
  for (Index i = 0; i < lw.size(); ++i) {
    const double v = log_weights_prev[i] + suffix_logdens[i];
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      std::cerr << "gpssm: non-finite ancestor weight for particle " << i
                << ", setting to zero\n";
      lw[i] = -std::numeric_limits<double>::infinity();
    } else {
      lw[i] = v;
    }
  }
  return normalized_weights_from_log(lw, "ancestor sampling");
}

AncestorDraw ancestor_sample(const Eigen::Ref<const Vec>& log_weights_prev,
                             const Eigen::Ref<const Vec>& suffix_logdens, Rng& rng) {
  AncestorDraw out;
  out.weights = ancestor_weights(log_weights_prev, suffix_logdens);
  out.index = rng.categorical(out.weights);
  return out;
}

Vec sample_gaussian(const PredictiveMoments& pm, Rng& rng) {
  Vec x(pm.mu.size());
  for (Index d = 0; d < x.size(); ++d)
    x[d] = pm.mu[d] + std::sqrt(pm.var[d]) * rng.normal();
  return x;
}

}  // namespace gpssm
