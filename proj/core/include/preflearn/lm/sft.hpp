#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "preflearn/lm/model.hpp"
#include "preflearn/lm/optimizer.hpp"

namespace preflearn::lm {

/// Optimizer and schedule settings shared by the supervised trainers.
struct TrainConfig {
  double learning_rate = 1e-3;
  double warmup_fraction = 0.0;
  bool decay = false;
  double final_lr_fraction = 0.0;  ///< only with decay
  int epochs = 1;
  int batch_size = 8;
  AdamWConfig adam{};
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 0;

  /// Desk-scale SFT: constant 1e-3 after no warmup.
  static TrainConfig sft_defaults();
  /// Reward-model recipe: one epoch, 1e-5 peak, 3% warmup, linear decay to
  /// 1e-6, batch 512.
  static TrainConfig reward_model_defaults();

  void validate() const;
};

struct Demonstration {
  TokenSequence prompt;
  TokenSequence response;  ///< without EOS; EOS is appended as the final target
};

/// Token-averaged next-token cross-entropy over response tokens (plus the
/// EOS target) of every demonstration. When `grad` is non-empty the
/// gradient of that mean is accumulated into it.
template <typename T>
double sft_loss_and_grad(const ModelParams<T>& params, std::span<const Demonstration> batch, std::span<T> grad);

/// Minimizes sft_loss with AdamW. The input is left untouched; the result is
/// a pure function of (config, params, demonstrations). Throws ConfigError on
/// empty demonstrations.
PolicyParams train_sft(const TrainConfig& config, const PolicyParams& params,
                       const std::vector<Demonstration>& demonstrations, const StepCallback& on_step = {});

/// Shuffled epoch order; shared by the supervised trainers.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

}  // namespace preflearn::lm
