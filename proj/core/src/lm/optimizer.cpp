#include "preflearn/lm/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "preflearn/common/errors.hpp"

namespace preflearn::lm {

AdamW::AdamW(const AdamWConfig& config, std::vector<std::size_t> group_sizes) : config_(config) {
  for (const auto n : group_sizes) {
    m_.emplace_back(n, 0.0f);
    v_.emplace_back(n, 0.0f);
  }
}

void AdamW::step(std::span<const std::span<float>> params, std::span<const std::span<const float>> grads,
                 double learning_rate) {
  if (params.size() != m_.size() || grads.size() != m_.size()) throw ShapeError("AdamW: group count mismatch");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t g = 0; g < params.size(); ++g) {
    auto p = params[g];
    auto gr = grads[g];
    auto& m = m_[g];
    auto& v = v_[g];
    if (p.size() != m.size() || gr.size() != m.size()) throw ShapeError("AdamW: group size mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = gr[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      double w = p[i];
      w -= learning_rate * config_.weight_decay * w;
      w -= learning_rate * (mi / c1) / (std::sqrt(vi / c2) + config_.eps);
      p[i] = static_cast<float>(w);
    }
  }
}

LrSchedule LrSchedule::make(double peak, std::size_t total_steps, double warmup_fraction, bool decay,
                            double final_fraction) {
  LrSchedule s;
  s.peak = peak;
  s.total_steps = std::max<std::size_t>(total_steps, 1);
  s.warmup_steps = static_cast<std::size_t>(std::floor(warmup_fraction * static_cast<double>(s.total_steps)));
  s.decay = decay;
  s.final_fraction = final_fraction;
  return s;
}

double LrSchedule::at(std::size_t step) const {
  if (step < warmup_steps) return peak * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  if (!decay) return peak;
  const double span = static_cast<double>(total_steps - warmup_steps);
  const double remaining = std::clamp((static_cast<double>(total_steps) - static_cast<double>(step)) / span, 0.0, 1.0);
  return peak * (final_fraction + (1.0 - final_fraction) * remaining);
}

double clip_grad_norm(std::span<const std::span<float>> grads, double max_norm) {
  double sq = 0.0;
  for (const auto g : grads)
    for (const float v : g) sq += static_cast<double>(v) * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const float scale = static_cast<float>(max_norm / (norm + 1e-6));
    for (const auto g : grads)
      for (float& v : g) v *= scale;
  }
  return norm;
}

}  // namespace preflearn::lm
