#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace preflearn::lm {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// AdamW with bias correction and decoupled weight decay over one or more
/// parameter groups (e.g. policy and value model stepped jointly).
class AdamW {
 public:
  AdamW(const AdamWConfig& config, std::vector<std::size_t> group_sizes);

  void step(std::span<const std::span<float>> params, std::span<const std::span<const float>> grads,
            double learning_rate);

  std::uint64_t steps_taken() const noexcept { return t_; }

 private:
  AdamWConfig config_;
  std::vector<std::vector<float>> m_, v_;
  std::uint64_t t_ = 0;
};

/// Linear warmup over the first `warmup_steps` (lr = peak * (s + 1) / warmup),
/// then either constant or a linear decay reaching final_fraction * peak at
/// the end of training.
struct LrSchedule {
  double peak = 1e-3;
  std::size_t total_steps = 1;
  std::size_t warmup_steps = 0;
  bool decay = false;
  double final_fraction = 0.0;

  static LrSchedule make(double peak, std::size_t total_steps, double warmup_fraction, bool decay,
                         double final_fraction);
  double at(std::size_t step) const;
};

/// Scales all groups jointly so their global L2 norm is at most max_norm
/// (no-op when max_norm <= 0). Returns the pre-clip norm.
double clip_grad_norm(std::span<const std::span<float>> grads, double max_norm);

struct TrainStepInfo {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
  double grad_norm = 0.0;
};

using StepCallback = std::function<void(const TrainStepInfo&)>;

}  // namespace preflearn::lm
